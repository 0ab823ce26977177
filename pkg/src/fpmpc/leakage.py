"""Information-leakage accounting for uniform masking.

All quantities are in bits.  The analytic bounds are

* masking a value with ``|X| <= beta`` by uniform noise on ``[-gamma, gamma]``
  leaks at most ``beta / gamma``;
* party 1's full view of a Beaver squaring leaks at most
  ``5 / gamma + 1 / gamma**2``;
* an ``n``-step scaling-and-squaring exponential with doubling noise leaks
  less than ``6 n beta / gamma``;
* repeated observations add (subadditivity) and deterministic
  post-processing adds nothing.

:func:`mutual_information` evaluates the exact leakage of a masked scalar
for a given prior by adaptive quadrature of the entropy integral, so the
bounds can be checked numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidArgument, NumericFailure

QUAD_TOL = 1e-10


def bound_masking(beta: float, gamma: float) -> float:
    """Upper bound ``beta / gamma`` on I(X; X+Y) for ``|X| <= beta``."""
    if not (0 <= beta < gamma):
        raise InvalidArgument(f"need 0 <= beta < gamma, got beta={beta}, gamma={gamma}")
    return beta / gamma


def bound_beaver_square(gamma: float, party: int = 0) -> float:
    """Leakage bound for one party's view of a Beaver squaring with ``|X| <= 1``.

    Party 0 (which holds ``X - Y``, ``P - Q`` and ``P**2 - T``) is bounded by
    ``5/gamma + 1/gamma**2``; the other party only sees ``X - P``.
    """
    if not gamma > 3:
        raise InvalidArgument(f"squaring bound needs gamma > 3, got {gamma}")
    if party == 0:
        return 5.0 / gamma + 1.0 / gamma**2
    return bound_masking(1.0, gamma)


def bound_exp_chain(n: int, beta: float, gamma: float) -> float:
    """Bound ``6 n beta / gamma`` for scaling and squaring with doubling noise."""
    if n < 1 or beta < 0 or gamma <= 0:
        raise InvalidArgument("need n >= 1, beta >= 0, gamma > 0")
    return 6.0 * n * beta / gamma


def optimal_gamma(eps: float = float(np.finfo(np.float64).eps)) -> float:
    """Mask width balancing roundoff ``6 gamma**2 eps`` against leakage ``6 / gamma``."""
    if not (0 < eps <= 1):
        raise InvalidArgument(f"machine epsilon must lie in (0, 1], got {eps}")
    return eps ** (-1.0 / 3.0)


# --------------------------------------------------------------------------
# priors and the entropy integral


@dataclass(frozen=True)
class BoundedPrior:
    """Distribution of a scalar secret supported on ``[-beta, beta]``.

    ``kind`` is ``"rademacher"`` (``+-beta`` with probability 1/2),
    ``"uniform"`` or ``"grid"`` (point masses at ``support`` with
    ``probs``).
    """

    kind: str
    beta: float
    support: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("rademacher", "uniform", "grid"):
            raise InvalidArgument(f"unknown prior kind {self.kind!r}")
        if self.beta < 0:
            raise InvalidArgument("beta must be nonnegative")
        if self.kind == "grid":
            s = np.asarray(self.support, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if s.shape != p.shape or s.size == 0:
                raise InvalidArgument("grid prior needs matching nonempty support and probs")
            if np.any(np.abs(s) > self.beta * (1 + 1e-12)):
                raise InvalidArgument("grid support leaves [-beta, beta]")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise InvalidArgument("grid probabilities must be nonnegative and sum to 1")

    @classmethod
    def rademacher(cls, beta: float) -> "BoundedPrior":
        return cls("rademacher", beta)

    @classmethod
    def uniform(cls, beta: float) -> "BoundedPrior":
        return cls("uniform", beta)

    @classmethod
    def grid(cls, support, probs) -> "BoundedPrior":
        support = tuple(float(v) for v in support)
        beta = max(abs(v) for v in support)
        return cls("grid", beta, support, tuple(float(v) for v in probs))

    @classmethod
    def point_mass(cls, at: float = 0.0) -> "BoundedPrior":
        return cls.grid([at], [1.0])

    def cdf(self, y: float) -> float:
        if self.kind == "rademacher":
            if y < -self.beta:
                return 0.0
            return 0.5 if y < self.beta else 1.0
        if self.kind == "uniform":
            if self.beta == 0:
                return float(y >= 0)
            return min(1.0, max(0.0, (y + self.beta) / (2 * self.beta)))
        s = np.asarray(self.support)
        return float(np.sum(np.asarray(self.probs)[s <= y]))

    def breakpoints(self) -> list:
        if self.kind == "rademacher":
            return [-self.beta, self.beta]
        if self.kind == "uniform":
            return []
        return sorted(set(self.support))


def _binary_entropy_neg(p: float) -> float:
    """``p log2 p + (1-p) log2 (1-p)`` with the ``0 log 0 = 0`` convention."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p)


def _integrate_entropy_gap(prior: BoundedPrior) -> tuple:
    """Return ``(J, abserr)`` with ``J = -int_{-beta}^{beta} h(F(y)) dy``."""
    beta = prior.beta
    if beta == 0:
        return 0.0, 0.0
    pts = [p for p in prior.breakpoints() if -beta < p < beta]
    # the integral grows like beta, so the tolerance does too
    tol = QUAD_TOL * max(1.0, beta)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(
                lambda y: _binary_entropy_neg(prior.cdf(y)),
                -beta,
                beta,
                points=pts or None,
                epsabs=tol,
                epsrel=0.0,
                limit=max(200, 4 * len(pts)),
            )
        except integrate.IntegrationWarning as exc:
            raise NumericFailure(f"entropy quadrature did not converge: {exc}") from exc
    if err > tol * 10:
        raise NumericFailure(f"entropy quadrature residual {err:.3g} exceeds tolerance")
    return -val, err


def mutual_information(prior: BoundedPrior, gamma: float) -> float:
    """I(X; X+Y) in bits for ``X ~ prior`` and ``Y`` uniform on ``[-gamma, gamma]``."""
    if not prior.beta < gamma:
        raise InvalidArgument(f"prior bound {prior.beta} must be below gamma {gamma}")
    j, _ = _integrate_entropy_gap(prior)
    return j / (2.0 * gamma)


def entropy_sum_uniform(prior: BoundedPrior, gamma: float) -> float:
    """Differential entropy in bits of ``X + Y``; exceeds ``log2(2 gamma)`` by the leakage."""
    return mutual_information(prior, gamma) + math.log2(2.0 * gamma)


# --------------------------------------------------------------------------
# ledger


@dataclass
class LedgerEntry:
    description: str
    bits_each: float
    count: int = 1

    @property
    def bits(self) -> float:
        return self.bits_each * self.count


@dataclass
class LeakageLedger:
    """Running upper bound on information leaked to one party.

    Identical events are merged into one entry with a multiplicity, which
    keeps long training runs from accumulating millions of rows.
    """

    entries: list = field(default_factory=list)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def total_bits(self) -> float:
        return math.fsum(e.bits for e in self.entries)

    def add(self, description: str, bits_each: float, count: int = 1) -> "LeakageLedger":
        if bits_each < 0 or count < 0:
            raise InvalidArgument("leakage charges must be nonnegative")
        key = (description, bits_each)
        i = self._index.get(key)
        if i is None:
            self._index[key] = len(self.entries)
            self.entries.append(LedgerEntry(description, bits_each, count))
        else:
            self.entries[i].count += count
        return self

    def merge(self, other: "LeakageLedger") -> "LeakageLedger":
        for e in other.entries:
            self.add(e.description, e.bits_each, e.count)
        return self

    def to_dict(self) -> dict:
        return {
            "events": [
                {"description": e.description, "count": e.count, "bits_each": e.bits_each,
                 "bits": e.bits}
                for e in self.entries
            ],
            "total_bits": self.total_bits,
            "bound": "upper",
        }


def ledger_charge(ledger: LeakageLedger, event: str, count: int = 1, **params) -> LeakageLedger:
    """Append the analytic bound for ``event`` ``count`` times.

    ``event`` is one of ``masking`` (``beta``, ``gamma``), ``beaver_square``
    (``gamma``, optional ``party``), ``exp_chain`` (``n``, ``beta``,
    ``gamma``) or ``deterministic`` (post-processing, charged zero).
    """
    if event == "masking":
        b, g = params["beta"], params["gamma"]
        return ledger.add(f"masking beta={b:g} gamma={g:g}", bound_masking(b, g), count)
    if event == "beaver_square":
        g, party = params["gamma"], params.get("party", 0)
        return ledger.add(f"beaver_square gamma={g:g}", bound_beaver_square(g, party), count)
    if event == "exp_chain":
        n, b, g = params["n"], params["beta"], params["gamma"]
        return ledger.add(f"exp_chain n={n} beta={b:g} gamma={g:g}", bound_exp_chain(n, b, g), count)
    if event in ("deterministic", "deterministic-postprocess"):
        return ledger.add(params.get("description", "deterministic post-processing"), 0.0, count)
    raise InvalidArgument(f"unknown leakage event {event!r}")


def ledger_from_plan(plan: Sequence[dict]) -> LeakageLedger:
    """Build a ledger from a list of ``{"kind": ..., "count": ..., **params}`` events."""
    ledger = LeakageLedger()
    for ev in plan:
        ev = dict(ev)
        kind = ev.pop("kind")
        count = int(ev.pop("count", 1))
        ledger_charge(ledger, kind, count, **ev)
    return ledger
