"""Dense float64 tensors and the deterministic random source.

Tensors are plain row-major ``numpy.ndarray`` objects of dtype float64; the
helpers here add the shape and finiteness checks the rest of the package
relies on.  Randomness comes from :class:`RandomSource`, a thin wrapper
around numpy's counter-based Philox generator keyed by ``(seed, stream)``.
Philox output for a given key is identical on every platform, and
``Generator.random`` maps 53 random bits to ``[0, 1)``, so draws replay
bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, NumericFailure, ShapeError

# Stream ids used by the protocol layers; one stream per independent role so
# that the interleaving of requests never changes what a role draws.
STREAM_DATA = 0
STREAM_SHARING = 1
STREAM_BATCHES = 2
STREAM_PERMUTATION = 3
STREAM_DEALER = 16  # + triple kind

_MASK64 = (1 << 64) - 1


class RandomSource:
    """Replayable random stream identified by a 64-bit seed and stream id."""

    def __init__(self, seed: int = 0, stream: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream <= _MASK64):
            raise InvalidArgument("seed and stream must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream = int(stream)
        key = self.seed | (self.stream << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream={self.stream})"

    def spawn(self, stream: int) -> "RandomSource":
        """Independent source with the same seed and another stream id."""
        return RandomSource(self.seed, stream)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def as_tensor(x) -> np.ndarray:
    """Coerce to a float64 array and enforce the all-finite invariant."""
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericFailure("tensor contains NaN or Inf")
    return a


def uniform(shape, half_width: float, rng: RandomSource) -> np.ndarray:
    """I.i.d. draws uniform on ``[-half_width, half_width]``.

    >>> t = uniform((2, 2), 1e5, RandomSource(42))
    >>> bool(np.all(np.abs(t) <= 1e5))
    True
    """
    if not half_width > 0 or not np.isfinite(half_width):
        raise InvalidArgument(f"half-width must be positive and finite, got {half_width!r}")
    return (rng.random(shape) * 2.0 - 1.0) * half_width


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return as_tensor(a @ b)


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return as_tensor(a + b)


def sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return as_tensor(a - b)


def scale(a, s: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(a, dtype=np.float64) * float(s)
    return as_tensor(out)
