"""Numerical self-checks run by ``fpmpc validate``.

The quick suite takes about a second: Beaver squaring roundoff, the
leakage integral for the extremal prior, Chebyshev accuracy and the
optimal mask width.  The full suite adds private training of the
synthetic experiments, which takes minutes.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .approx import preset
from .beaver import roundoff_certificate
from .leakage import BoundedPrior, mutual_information, optimal_gamma
from .private import evaluate_private
from .tensor import STREAM_DATA, RandomSource


def _check(name, value, limit, passed) -> dict:
    return {"name": name, "value": float(value), "limit": limit, "passed": bool(passed)}


async def _square(ops, x):
    return await ops.square(x)


def beaver_square_precision(seed: int = 0, count: int = 1000, gamma: float = 1e5) -> dict:
    x = RandomSource(seed, STREAM_DATA).random(count) * 2.0 - 1.0
    err = float(np.max(np.abs(evaluate_private(_square, [x], gamma, seed).value - x * x)))
    cert = roundoff_certificate(gamma)
    return _check("beaver_square_precision", err, cert, err <= cert)


def rademacher_leakage(gamma: float = 1e5) -> dict:
    bits = mutual_information(BoundedPrior.rademacher(1.0), gamma)
    return _check("rademacher_leakage_bits", bits, 1.0 / gamma, abs(bits - 1.0 / gamma) <= 1e-9)


CHEB_TARGETS = (
    ("tanh-50-10", np.tanh, 1e-7),
    ("logistic-22-5", lambda x: special.expit(x) - 0.5, 1e-4),
    ("probit-34-10", lambda x: special.ndtr(x) - 0.5, 1e-5),
)


def chebyshev_accuracy(name: str, ref, limit: float, points: int = 10_001) -> dict:
    s = preset(name)
    x = np.linspace(-s.z, s.z, points)
    err = float(np.max(np.abs(s(x) - ref(x))))
    return _check(f"chebyshev_{name}", err, limit, err <= limit)


def gamma_optimum() -> dict:
    g = optimal_gamma(2.2e-16)
    return _check("optimal_gamma", g, [1.6e5, 1.7e5], 1.6e5 <= g <= 1.7e5)


def _experiments(seed: int) -> list:
    from .experiments import simulate

    out = []
    r = simulate("linear", seed=seed)
    out.append(_check("linear_residual", r["metrics"]["residual"], [9.95, 10.05],
                      9.95 <= r["metrics"]["residual"] <= 10.05))
    for name in ("logit", "probit"):
        r = simulate(name, seed=seed)
        out.append(_check(f"{name}_accuracy", r["metrics"]["accuracy"], 1.0, r["metrics"]["accuracy"] == 1.0))
        out.append(_check(f"{name}_discrepancy", r["discrepancy"], 0.02, r["discrepancy"] <= 0.02))
    r = simulate("poisson", seed=seed)
    gap = abs(r["metrics"]["avg_neg_log_likelihood"] - r["ideal_avg_neg_log_likelihood"])
    out.append(_check("poisson_ideal_gap", gap, 5e-3, gap <= 5e-3))
    return out


def run(suite: str = "quick", seed: int = 0) -> list:
    checks = [beaver_square_precision(seed), rademacher_leakage()]
    checks += [chebyshev_accuracy(*t) for t in CHEB_TARGETS]
    checks.append(gamma_optimum())
    if suite == "full":
        checks += _experiments(seed)
    return checks
