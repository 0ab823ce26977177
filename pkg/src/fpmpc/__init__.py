"""Floating-point secure multiparty computation with additive sharing."""

__version__ = "0.1.0"
