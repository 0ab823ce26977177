"""Special functions from additions and multiplications only.

Each function has an ``async`` kernel taking an ``ops`` back end (see
:mod:`fpmpc.ops`) and, for public use, a synchronous wrapper that validates
the input domain and runs the kernel on plain arrays.  Private evaluation
awaits the same kernel with :class:`~fpmpc.ops.PrivateOps`; domains then
become a caller contract since shares cannot be inspected.

Newton iterations and their certified input intervals (measured by a dense
sweep, error against the exact function in double precision):

=========  ======  =========  =========================  ==============
function   iters   start      certified interval         max error
=========  ======  =========  =========================  ==============
sgn        60      x/gamma    1.7e-10 <= |x|/gamma <= 1  1e-12 absolute
1/x        30      1          [2**-24, 2 - 2**-24]       2.3e-16 rel
1/sqrt(x)  26      1          [2**-24, 2.999]            3.9e-16 rel
x**(-1/8)  24      1          [2**-26, 8]                8.7e-16 rel
=========  ======  =========  =========================  ==============

Outside these intervals (but inside the convergence basin) the iterations
still converge, only with fewer correct digits.

The exponential uses scaling and squaring: ``(1 + x / 2**n)**(2**n)`` with
``n = 20`` squarings, relative error at most ``2 x**2 / 2**n`` plus a
rounding term ``2**(n + 1) * eps`` (about 4.7e-10) from the squarings
amplifying the rounding of the starting value.  In private
mode squaring ``k`` (from 0) uses a triple rescaled to mask width
``gamma * 2**(k - n)``, so the noise doubles as the value's dynamic range
grows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import BoundViolation, DomainError, InvalidArgument
from .ops import PublicOps, is_secret
from .runtime import run_sync

_PUBLIC = PublicOps()


@dataclass(frozen=True)
class NewtonConfig:
    iterations: int
    gamma: float = 1e5

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgument("need at least one iteration")
        if not self.gamma > 0:
            raise InvalidArgument("gamma must be positive")


SGN = NewtonConfig(60)
# rectifiers whose error cancels or lands where the output is flat: inputs
# up to 221 in magnitude, exact sign for |x| >= 7.3e-5
SHIFT_SGN = NewtonConfig(40, 128.0)
RECIP = NewtonConfig(30)
INVSQRT = NewtonConfig(26)
INVROOT8 = NewtonConfig(24)


def _public(x) -> np.ndarray:
    if is_secret(x):
        raise TypeError("public evaluation got a secret; await the kernel with PrivateOps")
    return np.asarray(x, dtype=np.float64)


# --------------------------------------------------------------------------
# Newton iterations


async def sgn_kernel(ops, x, iters: int = 60, gamma: float = 1e5):
    y = x * (1.0 / gamma)
    for _ in range(iters):
        y2 = await ops.square(y)
        y = await ops.mul(y, 3.0 - y2) * 0.5
    return y


async def recip_kernel(ops, x, iters: int = 30):
    y = np.ones(x.shape)
    for _ in range(iters):
        xy = await ops.mul(x, y)
        y = await ops.mul(y, 2.0 - xy)
    return y


async def invsqrt_kernel(ops, x, iters: int = 26):
    y = np.ones(x.shape)
    for _ in range(iters):
        y2 = await ops.square(y)
        xy2 = await ops.mul(x, y2)
        y = await ops.mul(y, 3.0 - xy2) * 0.5
    return y


async def invroot8_kernel(ops, x, iters: int = 24):
    y = np.ones(x.shape)
    for _ in range(iters):
        y8 = y
        for _ in range(3):
            y8 = await ops.square(y8)
        xy8 = await ops.mul(x, y8)
        y = await ops.mul(y, 9.0 - xy8) * 0.125
    return y


async def relu_kernel(ops, x, iters: int = 60, gamma: float = 1e5):
    s = await sgn_kernel(ops, x, iters, gamma)
    return await ops.mul(x, 1.0 + s) * 0.5


async def abs_kernel(ops, x, iters: int = 60, gamma: float = 1e5):
    s = await sgn_kernel(ops, x, iters, gamma)
    return await ops.mul(x, s)


def _check_gamma(x, gamma):
    if x.size and np.max(np.abs(x)) > gamma:
        raise BoundViolation(f"|x| = {np.max(np.abs(x)):.6g} exceeds gamma = {gamma:.6g}")


def newton_sgn(x, cfg: NewtonConfig = SGN) -> np.ndarray:
    """Sign of ``x`` by Newton-Schulz iteration ``y <- y (3 - y^2) / 2``, ``y0 = x / gamma``.

    >>> float(newton_sgn(np.array(-2.0)))
    -1.0
    """
    x = _public(x)
    _check_gamma(x, cfg.gamma)
    return run_sync(sgn_kernel(_PUBLIC, x, cfg.iterations, cfg.gamma))


def newton_recip(x, cfg: NewtonConfig = RECIP) -> np.ndarray:
    """``1 / x`` for ``x`` in ``(0, 2)`` by ``y <- y (2 - x y)`` from ``y0 = 1``."""
    x = _public(x)
    if x.size and (np.min(x) <= 0 or np.max(x) >= 2):
        raise DomainError("reciprocal iteration needs 0 < x < 2; rescale first")
    return run_sync(recip_kernel(_PUBLIC, x, cfg.iterations))


def newton_invsqrt(x, cfg: NewtonConfig = INVSQRT) -> np.ndarray:
    """``x**-0.5`` for ``x`` in ``(0, 3)`` by ``y <- y (3 - x y^2) / 2`` from ``y0 = 1``."""
    x = _public(x)
    if x.size and (np.min(x) <= 0 or np.max(x) >= 3):
        raise DomainError("inverse square root iteration needs 0 < x < 3; rescale first")
    return run_sync(invsqrt_kernel(_PUBLIC, x, cfg.iterations))


def newton_invroot8(x, cfg: NewtonConfig = INVROOT8) -> np.ndarray:
    """``x**-0.125`` for ``x`` in ``(0, 8]`` by ``y <- y (9 - x y^8) / 8`` from ``y0 = 1``."""
    x = _public(x)
    if x.size and (np.min(x) <= 0 or np.max(x) > 8):
        raise DomainError("inverse eighth root iteration needs 0 < x <= 8; rescale first")
    return run_sync(invroot8_kernel(_PUBLIC, x, cfg.iterations))


def relu(x, cfg: NewtonConfig = SGN) -> np.ndarray:
    """``x (1 + sgn x) / 2``."""
    x = _public(x)
    _check_gamma(x, cfg.gamma)
    return run_sync(relu_kernel(_PUBLIC, x, cfg.iterations, cfg.gamma))


def abs_(x, cfg: NewtonConfig = SGN) -> np.ndarray:
    """``x sgn x``."""
    x = _public(x)
    _check_gamma(x, cfg.gamma)
    return run_sync(abs_kernel(_PUBLIC, x, cfg.iterations, cfg.gamma))


# --------------------------------------------------------------------------
# odd Chebyshev series


@dataclass(frozen=True)
class ChebOddSeries:
    """``sum_j c_{2j-1} T_{2j-1}(y / z)`` for ``j = 1..n``; valid on ``[-z, z]``."""

    n: int
    z: float
    coeffs: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        if len(self.coeffs) != self.n:
            raise InvalidArgument(f"need {self.n} coefficients, got {len(self.coeffs)}")

    @property
    def tail(self) -> float:
        """Magnitude of the last coefficient; a cheap truncation diagnostic."""
        return float(abs(self.coeffs[-1]))

    def to_json(self) -> str:
        return json.dumps(
            {"name": self.name, "n": self.n, "z": self.z, "coeffs": [float(c) for c in self.coeffs]}
        )

    @classmethod
    def from_json(cls, text: str) -> "ChebOddSeries":
        d = json.loads(text)
        return cls(int(d["n"]), float(d["z"]), np.asarray(d["coeffs"], dtype=np.float64), d.get("name", ""))

    def __call__(self, y) -> np.ndarray:
        return cheb_eval_odd(self, y)


def cheb_fit_odd(f, n: int, z: float, name: str = "") -> ChebOddSeries:
    """Coefficients of the odd Chebyshev interpolant of ``f`` on ``[-z, z]``.

    Uses the ``n`` positive Chebyshev nodes ``cos((2k - 1) pi / 4n)``; for an
    odd ``f`` the even coefficients vanish and the odd ones are
    ``(2/n) sum_k cos(j (2k-1) pi / 4n) f(z cos((2k-1) pi / 4n))``.
    """
    if n < 1 or not z > 0:
        raise InvalidArgument(f"need n >= 1 and z > 0, got n={n}, z={z}")
    theta = (2 * np.arange(1, n + 1) - 1) * np.pi / (4 * n)
    fx = np.asarray(f(z * np.cos(theta)), dtype=np.float64)
    j = 2 * np.arange(n) + 1
    coeffs = (2.0 / n) * (np.cos(np.outer(j, theta)) @ fx)
    return ChebOddSeries(n, float(z), coeffs, name)


async def cheb_kernel(ops, series: ChebOddSeries, y):
    c = series.coeffs
    x = y * (1.0 / series.z)
    acc = x * c[0]
    if series.n == 1:
        return acc
    x2 = await ops.square(x)
    step = x2 * 4.0 - 2.0
    t_prev = x
    t = await ops.mul(x2 * 4.0 - 3.0, x)
    acc = acc + t * c[1]
    for cj in c[2:]:
        t_prev, t = t, (await ops.mul(step, t)) - t_prev
        acc = acc + t * cj
    return acc


def _stack(a, b):
    if is_secret(a):
        return a._like(np.concatenate([a.share, b.share], axis=-1))
    return np.concatenate([a, b], axis=-1)


async def clamp_kernel(ops, y, z: float, cfg: NewtonConfig = SHIFT_SGN):
    """``y`` clipped to ``[-z, z]`` as ``y - relu(y - z) + relu(-y - z)``.

    Both rectifiers run as one batched evaluation.  Private accuracy
    degrades only near the endpoints, where saturating functions are flat.
    """
    w = y.shape[-1]
    r = await relu_kernel(ops, _stack(y - z, -y - z), cfg.iterations, cfg.gamma)
    return y - r[..., :w] + r[..., w:]


def cheb_eval_odd(series: ChebOddSeries, y) -> np.ndarray:
    """Evaluate an odd series by the three-term recurrence in ``x^2``."""
    y = _public(y)
    if y.size and np.max(np.abs(y)) > series.z:
        raise DomainError(f"|y| = {np.max(np.abs(y)):.6g} outside the series interval [-{series.z}, {series.z}]")
    return run_sync(cheb_kernel(_PUBLIC, series, y))


def logistic_centered(x):
    """``1 / (1 + exp(-x)) - 1/2``, written as ``tanh(x / 2) / 2``."""
    return np.tanh(np.asarray(x) / 2.0) / 2.0


def normal_cdf_centered(x):
    """``Phi(x) - 1/2``."""
    return special.erf(np.asarray(x) / math.sqrt(2.0)) / 2.0


_PRESETS = {
    # production sizes used for training
    "tanh": (np.tanh, 60, 20.0),
    "logistic": (logistic_centered, 60, 20.0),
    "probit": (normal_cdf_centered, 50, 20.0),
    # smaller sizes with documented accuracy ceilings
    "tanh-50-10": (np.tanh, 50, 10.0),
    "logistic-22-5": (logistic_centered, 22, 5.0),
    "probit-34-10": (normal_cdf_centered, 34, 10.0),
}


@lru_cache(maxsize=None)
def preset(name: str) -> ChebOddSeries:
    """Named series; see ``PRESET_NAMES``."""
    try:
        f, n, z = _PRESETS[name]
    except KeyError:
        raise InvalidArgument(f"unknown series preset {name!r}; have {sorted(_PRESETS)}") from None
    return cheb_fit_odd(f, n, z, name)


PRESET_NAMES = tuple(_PRESETS)


# --------------------------------------------------------------------------
# exponential and softmax


async def exp_kernel(ops, x, n: int = 20, beta: float = 20.0):
    """``(1 + x / 2^n)`` squared ``n`` times; any sign of ``x``."""
    y = 1.0 + x * (2.0 ** -n)
    for k in range(n):
        y = await ops.square(y, scale=2.0 ** (k - n))
    ops.charge_exp(n, beta, int(np.prod(y.shape)))
    return y


def exp_nonpos(x, n: int = 20) -> np.ndarray:
    """``exp(x)`` for ``x <= 0`` by scaling and squaring.

    >>> float(exp_nonpos(np.array(0.0)))
    1.0
    """
    x = _public(x)
    if x.size and np.max(x) > 0:
        raise DomainError("exp_nonpos needs x <= 0; pass -relu(-x)")
    return run_sync(exp_kernel(_PUBLIC, x, n))


def exp_scaled(x, n: int = 20) -> np.ndarray:
    """Scaling and squaring without the sign restriction (accuracy degrades as ``x^2 / 2^n``)."""
    return run_sync(exp_kernel(_PUBLIC, _public(x), n))


async def softmax_kernel(ops, xs, C: float = 5.0, cfg: NewtonConfig = SHIFT_SGN, n_exp: int = 20):
    """Softmax along the last axis using only the operations above.

    The rectifier only sets the shift, which cancels, so it runs with the
    cheap ``SHIFT_SGN`` settings.
    """
    k = xs.shape[-1]
    y = xs - C
    r = await relu_kernel(ops, y, cfg.iterations, cfg.gamma)
    y = y - r.sum(axis=-1, keepdims=True)
    e = await exp_kernel(ops, y, n_exp)
    z = e.sum(axis=-1, keepdims=True)
    inv = await recip_kernel(ops, z * (1.0 / k))
    return await ops.mul(e, inv) * (1.0 / k)


def softmax_shifted(xs, C: float = 5.0, cfg: NewtonConfig = SHIFT_SGN) -> np.ndarray:
    """Probabilities ``exp(x_j) / sum_k exp(x_k)`` along the last axis.

    Inputs are shifted by ``-C - sum_k relu(x_k - C)`` so every exponent is
    nonpositive; the result is unchanged by the shift up to roundoff.  The
    normalizer is divided by the number of terms before the reciprocal
    iteration.  Full accuracy needs ``Z / k >= 2**-24``, which holds when
    the largest input is at least ``C - 16.6 + ln k`` or so; inputs should
    be roughly centered at or above zero.
    """
    xs = _public(xs)
    if xs.ndim == 0 or xs.shape[-1] == 0:
        raise InvalidArgument("softmax needs a nonempty vector")
    _check_gamma(xs - C, cfg.gamma)
    return run_sync(softmax_kernel(_PUBLIC, xs, C, cfg))
