"""Beaver multiplication and squaring over additive shares.

Each routine is the per-party half of a two-round-trip-free protocol: the
party subtracts its triple shares from its inputs, one all-reduce makes the
masked differences public, and the output share is assembled locally.

For a product with triple ``(P, R, PR)`` and public ``Du = U - P``,
``Dx = X - R`` every party emits::

    PR_i + Du R_i + P_i Dx + (Du Dx) / n

and for a square with triple ``(P, P^2)`` and public ``D = X - P``::

    (P^2)_i + 2 P_i D + D^2 / n

Summed over parties these give ``UX`` and ``X^2``.  The public cross term is
split evenly so that every party runs identical code.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InvalidArgument, ShapeError
from .leakage import bound_beaver_square
from .sharing import SecretTensor
from .triples import CONV, HADAMARD, KIND_NAMES, MATMUL, SQUARE, BeaverTriple

EPS = float(np.finfo(np.float64).eps)


def roundoff_certificate(gamma: float, inner: int = 1) -> float:
    """Absolute roundoff bound ``6 gamma^2 eps`` per scalar product, times ``inner``."""
    return 6.0 * gamma * gamma * EPS * max(1, int(inner))


def _check(kind: int, triple: BeaverTriple, *inputs: SecretTensor):
    if triple.kind != kind:
        raise InvalidArgument(
            f"expected a {KIND_NAMES[kind]} triple, got {KIND_NAMES.get(triple.kind, triple.kind)}"
        )
    first = inputs[0]
    if len(inputs) == 2:
        s = inputs[1]
        if s.party != first.party or s.session != first.session or s.n_parties != first.n_parties:
            raise InvalidArgument("inputs must be shares of one party in one session")
    if triple.consumed:
        triple.consume()  # raises ReuseError
    comps = triple.components
    if any(c.shape != s.share.shape for c, s in zip(comps, inputs)):
        want = tuple(s.dims for s in inputs)
        raise ShapeError(f"triple dims {triple.input_shapes} do not match inputs {want}")


def _charge_masking(net, count: int, gamma: float):
    ledger = getattr(net, "ledger", None)
    if ledger is not None and count:
        ledger.add(f"masking beta=1 gamma={gamma:g}", 1.0 / gamma, count)


async def _beaver_product(kind, product: Callable, u, x, triple, net, charge: bool):
    _check(kind, triple, u, x)
    p, r, pr = triple.consume()
    du_i = u.share - p
    dx_i = x.share - r
    published = await net.all_reduce(np.concatenate([du_i.ravel(), dx_i.ravel()]))
    du = published[: du_i.size].reshape(du_i.shape)
    dx = published[du_i.size:].reshape(dx_i.shape)
    n = u.n_parties
    out = pr + product(du, r) + product(p, dx) + product(du, dx) / n
    if charge:
        _charge_masking(net, published.size, triple.gamma)
    return SecretTensor(out, u.party, n, u.session)


async def beaver_mul(u: SecretTensor, x: SecretTensor, triple: BeaverTriple, net, charge: bool = True):
    """Shares of the matrix product ``U @ X``."""
    return await _beaver_product(MATMUL, np.matmul, u, x, triple, net, charge)


async def beaver_hadamard(u: SecretTensor, x: SecretTensor, triple: BeaverTriple, net, charge: bool = True):
    """Shares of the entrywise product ``U * X``."""
    return await _beaver_product(HADAMARD, np.multiply, u, x, triple, net, charge)


async def beaver_conv(u: SecretTensor, x: SecretTensor, triple: BeaverTriple, net, charge: bool = True):
    """Shares of the full linear convolution of two sequences."""
    return await _beaver_product(CONV, np.convolve, u, x, triple, net, charge)


async def beaver_square(x: SecretTensor, triple: BeaverTriple, net, charge: bool = True):
    """Shares of ``X * X`` entrywise using a ``(P, P^2)`` triple.

    With ``charge`` the party's ledger receives the squaring bound per entry;
    callers that account for a whole chain at once (the exponential) pass
    ``charge=False``.
    """
    _check(SQUARE, triple, x)
    p, p2 = triple.consume()
    d_i = x.share - p
    d = await net.all_reduce(d_i)
    out = p2 + 2.0 * p * d + d * d / x.n_parties
    ledger = getattr(net, "ledger", None)
    if charge and ledger is not None and d.size:
        # with more than two parties any one of them may hold the X - Y piece
        party = x.party if x.n_parties == 2 else 0
        bits = bound_beaver_square(triple.gamma, party)
        ledger.add(f"beaver_square gamma={triple.gamma:g} view={'full' if party == 0 else 'masked'}",
                   bits, d.size)
    return SecretTensor(out, x.party, x.n_parties, x.session)
