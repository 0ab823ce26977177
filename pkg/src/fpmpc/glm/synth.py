"""Synthetic regression problems with known optimal parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from ..errors import InvalidArgument
from ..tensor import STREAM_DATA, RandomSource
from .model import Dataset


@dataclass
class SynthProblem:
    data: Dataset
    w: np.ndarray  # ideal weights
    c: float = 0.0  # ideal bias
    b: np.ndarray | None = None  # noiseless linear predictor A w + c


def _orthonormal_columns(m: int, k: int, rng: RandomSource) -> np.ndarray:
    if k > m:
        raise InvalidArgument(f"cannot orthonormalize {k} columns of length {m}")
    q, _ = np.linalg.qr(rng.normal((m, k)))
    return q


def synth_linear(m: int = 64, n: int = 8, seed: int = 0) -> SynthProblem:
    """Least squares with ``min ||A x - b|| = 10`` attained at the ideal ``w``.

    ``A`` and the unit vector ``v`` are the columns of an orthonormalized
    ``m x (n + 1)`` Gaussian matrix and ``b = A w + 10 v``.
    """
    rng = RandomSource(seed, STREAM_DATA)
    q = _orthonormal_columns(m, n + 1, rng)
    A, v = q[:, :n], q[:, n]
    w = rng.normal(n)
    b = A @ w + 10.0 * v
    return SynthProblem(Dataset(A, b), w, 0.0, b)


def synth_binary(m: int = 64, n: int = 8, margin: float = 0.02, link: str = "logit",
                 seed: int = 0, pairs: int = 10) -> SynthProblem:
    """Separable labels with ``pairs`` near-boundary pairs pinning the hyperplane.

    Rows ``2j`` and ``2j + 1`` (``j < pairs``) are ``u + margin w`` and
    ``u - margin w`` with ``u`` orthogonal to the unit vector ``w``; the rest
    are rows of an orthonormalized Gaussian matrix.  Labels are
    ``round(sigma(A w))`` for the logistic or normal-CDF ``sigma``.
    """
    if link not in ("logit", "probit"):
        raise InvalidArgument("binary synthetic data uses the logit or probit link")
    if 2 * pairs > m:
        raise InvalidArgument(f"{pairs} pairs need at least {2 * pairs} rows")
    rng = RandomSource(seed, STREAM_DATA)
    w = rng.normal(n)
    w /= np.linalg.norm(w)
    v = rng.normal((pairs, n))
    u = v - np.outer(v @ w, w)
    A = np.empty((m, n))
    A[0:2 * pairs:2] = u + margin * w
    A[1:2 * pairs:2] = u - margin * w
    q = _orthonormal_columns(m, n, rng)
    A[2 * pairs:] = q[2 * pairs:]
    b = A @ w
    sigma = special.expit if link == "logit" else special.ndtr
    t = np.round(sigma(b))
    return SynthProblem(Dataset(A, t), w, 0.0, b)


def synth_poisson(m: int = 64, n: int = 8, seed: int = 0) -> SynthProblem:
    """Counts ``round(exp(A w + 3))`` with ``||w|| = 10`` and orthonormal ``A``."""
    rng = RandomSource(seed, STREAM_DATA)
    A = _orthonormal_columns(m, n, rng)
    w = rng.normal(n)
    w *= 10.0 / np.linalg.norm(w)
    b = A @ w + 3.0
    t = np.round(np.exp(b))
    return SynthProblem(Dataset(A, t), w, 3.0, b)
