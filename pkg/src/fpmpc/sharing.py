"""Additive sharing of real matrices among two or more parties.

A secret ``X`` is split into matrices that sum to ``X``; every share except
one is uniform noise on ``[-gamma, gamma]``.  Linear operations on shares
are local: each party adds its shares, scales by public constants, and only
party 0 adds public constants (so that the sum picks them up exactly once).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundViolation, IncompleteSet, InvalidArgument, ShapeError
from .tensor import RandomSource, as_tensor, uniform


@dataclass(frozen=True)
class NoiseSpec:
    """Masking half-width ``gamma`` and certified plaintext bound ``beta``."""

    gamma: float = 1e5
    beta: float = 1.0

    def __post_init__(self):
        if not (0 < self.beta < self.gamma) or not np.isfinite(self.gamma):
            raise InvalidArgument(
                f"need 0 < beta < gamma, got beta={self.beta!r}, gamma={self.gamma!r}"
            )


class SecretTensor:
    """One party's additive share of a real tensor.

    Supports the local (communication-free) operations: addition and
    subtraction of shares, addition of public constants, multiplication by
    public scalars or arrays, indexing, transposition and summation.
    Multiplying two secrets needs a Beaver triple and lives in
    :mod:`fpmpc.beaver`.
    """

    __slots__ = ("share", "party", "n_parties", "session")
    # keep numpy from treating us as an object scalar in mixed expressions
    __array_ufunc__ = None

    def __init__(self, share, party: int, n_parties: int = 2, session: int = 0):
        self.share = share if isinstance(share, np.ndarray) else np.asarray(share, dtype=np.float64)
        self.party = party
        self.n_parties = n_parties
        self.session = session

    def __repr__(self):
        return (
            f"SecretTensor(dims={self.dims}, party={self.party}/{self.n_parties}, "
            f"session={self.session})"
        )

    @property
    def dims(self) -> tuple:
        return self.share.shape

    shape = dims

    def _like(self, share) -> "SecretTensor":
        return SecretTensor(share, self.party, self.n_parties, self.session)

    def _check_peer(self, other: "SecretTensor"):
        if other.party != self.party:
            raise InvalidArgument("cannot combine shares held by different parties")

    def __add__(self, other):
        if isinstance(other, SecretTensor):
            self._check_peer(other)
            return self._like(self.share + other.share)
        if self.party == 0:
            return self._like(self.share + other)
        return self._like(self.share + np.zeros_like(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SecretTensor):
            self._check_peer(other)
            return self._like(self.share - other.share)
        if self.party == 0:
            return self._like(self.share - other)
        return self._like(self.share - np.zeros_like(other))

    def __rsub__(self, other):
        if self.party == 0:
            return self._like(other - self.share)
        return self._like(-self.share + np.zeros_like(other))

    def __neg__(self):
        return self._like(-self.share)

    def __mul__(self, other):
        if isinstance(other, SecretTensor):
            raise TypeError("secret * secret needs a Beaver triple; use fpmpc.beaver")
        return self._like(self.share * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, SecretTensor):
            raise TypeError("division by a secret is not a local operation")
        return self._like(self.share / other)

    def __matmul__(self, other):
        if isinstance(other, SecretTensor):
            raise TypeError("secret @ secret needs a Beaver triple; use fpmpc.beaver")
        return self._like(self.share @ other)

    def __rmatmul__(self, other):
        return self._like(other @ self.share)

    def __getitem__(self, idx):
        return self._like(self.share[idx])

    @property
    def T(self) -> "SecretTensor":
        return self._like(self.share.T)

    def sum(self, axis=None, keepdims=False) -> "SecretTensor":
        return self._like(self.share.sum(axis=axis, keepdims=keepdims))

    def reshape(self, *shape) -> "SecretTensor":
        return self._like(self.share.reshape(*shape))

    def broadcast_to(self, shape) -> "SecretTensor":
        return self._like(np.broadcast_to(self.share, shape).copy())


def _check_bound(x: np.ndarray, noise: NoiseSpec):
    if x.size and np.max(np.abs(x)) > noise.beta:
        raise BoundViolation(
            f"max |x| = {np.max(np.abs(x)):.6g} exceeds certified bound beta = {noise.beta:.6g}"
        )


def share_two(x, noise: NoiseSpec, rng: RandomSource, session: int = 0, mask=None):
    """Split ``x`` into ``(x - Y, Y)`` with ``Y`` uniform on ``[-gamma, gamma]``.

    ``mask`` injects a fixed ``Y`` (tests and degenerate cases only).
    """
    x = as_tensor(x)
    _check_bound(x, noise)
    y = uniform(x.shape, noise.gamma, rng) if mask is None else as_tensor(mask)
    if y.shape != x.shape:
        raise ShapeError(f"mask shape {y.shape} differs from data shape {x.shape}")
    return (
        SecretTensor(x - y, 0, 2, session),
        SecretTensor(y, 1, 2, session),
    )


def share_n(x, n: int, noise: NoiseSpec, rng: RandomSource, session: int = 0):
    """Chain sharing among ``n`` parties with a random assignment of pieces.

    Draws ``Y_1..Y_n`` and forms ``X+Y_1-Y_2, Y_2-Y_3, ..., Y_n-Y_1``; the
    pieces go to a uniformly random permutation of the parties.  Returned
    list is indexed by party id.
    """
    if n < 2:
        raise InvalidArgument(f"need at least two parties, got {n}")
    x = as_tensor(x)
    _check_bound(x, noise)
    ys = [uniform(x.shape, noise.gamma, rng) for _ in range(n)]
    pieces = [ys[i] - ys[(i + 1) % n] for i in range(n)]
    pieces[0] = x + pieces[0]
    order = rng.permutation(n)
    shares = [None] * n
    for piece, party in zip(pieces, order):
        shares[int(party)] = SecretTensor(piece, int(party), n, session)
    return shares


def reconstruct(shares: Sequence[SecretTensor]) -> np.ndarray:
    """Sum a complete set of shares in ascending party order."""
    if not shares:
        raise IncompleteSet("no shares given")
    n = shares[0].n_parties
    by_party = {}
    for s in shares:
        if s.n_parties != n or s.session != shares[0].session:
            raise IncompleteSet("shares come from different sessions or party counts")
        if s.dims != shares[0].dims:
            raise IncompleteSet(f"share dims differ: {s.dims} vs {shares[0].dims}")
        if s.party in by_party:
            raise IncompleteSet(f"party {s.party} appears twice")
        by_party[s.party] = s
    if sorted(by_party) != list(range(n)):
        raise IncompleteSet(f"have parties {sorted(by_party)}, need 0..{n - 1}")
    total = by_party[0].share.astype(np.float64, copy=True)
    for p in range(1, n):
        total = total + by_party[p].share
    return total


def public_share(x, party: int, n_parties: int = 2, session: int = 0) -> SecretTensor:
    """Trivial sharing of a public value: party 0 holds it, the rest hold zeros."""
    x = np.asarray(x, dtype=np.float64)
    return SecretTensor(x.copy() if party == 0 else np.zeros_like(x), party, n_parties, session)
