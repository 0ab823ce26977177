"""Arithmetic back ends shared by the numerical kernels.

Kernels in :mod:`fpmpc.approx` and :mod:`fpmpc.glm` are ``async`` functions
of an ``ops`` object and the values it understands.  :class:`PublicOps`
works on plain arrays and never suspends; :class:`PrivateOps` works on
:class:`~fpmpc.sharing.SecretTensor` shares, draws triples from the party's
bank and suspends at each all-reduce.  Local operations (sums, public
scaling, adding public constants) are written with ordinary operators and
behave identically on both kinds of value.
"""

from __future__ import annotations

import numpy as np

from . import beaver
from .leakage import ledger_charge
from .sharing import SecretTensor
from .triples import CONV, HADAMARD, MATMUL, SQUARE


def is_secret(v) -> bool:
    return isinstance(v, SecretTensor)


class PublicOps:
    """Plain floating-point arithmetic."""

    private = False

    async def mul(self, a, b):
        return np.multiply(a, b)

    async def matmul(self, a, b):
        return np.matmul(a, b)

    async def conv(self, a, b):
        return np.convolve(a, b)

    async def square(self, a, scale: float | None = None):
        return np.multiply(a, a)

    async def reveal(self, a):
        return np.asarray(a, dtype=np.float64)

    def charge_exp(self, n: int, beta: float, count: int):
        pass


class PrivateOps:
    """Secret-shared arithmetic for one party.

    Products with a public operand are local; secret-by-secret products
    consume one triple each.
    """

    private = True

    def __init__(self, ctx):
        self.ctx = ctx

    def _take(self, kind, shapes):
        return self.ctx.triples.take(kind, shapes)

    async def mul(self, a, b):
        if not (is_secret(a) and is_secret(b)):
            return a * b
        if a.dims != b.dims:
            shape = np.broadcast_shapes(a.dims, b.dims)
            a, b = a.broadcast_to(shape), b.broadcast_to(shape)
        t = self._take(HADAMARD, (a.dims, b.dims))
        return await beaver.beaver_hadamard(a, b, t, self.ctx)

    async def matmul(self, a, b):
        if not (is_secret(a) and is_secret(b)):
            return a @ b
        t = self._take(MATMUL, (a.dims, b.dims))
        return await beaver.beaver_mul(a, b, t, self.ctx)

    async def conv(self, a, b):
        if not is_secret(a) and not is_secret(b):
            return np.convolve(a, b)
        if not is_secret(a):
            a, b = b, a
        if not is_secret(b):
            return SecretTensor(np.convolve(a.share, b), a.party, a.n_parties, a.session)
        t = self._take(CONV, (a.dims, b.dims))
        return await beaver.beaver_conv(a, b, t, self.ctx)

    async def square(self, a, scale: float | None = None):
        """Entrywise square; ``scale`` rescales the triple's mask width (exact for powers of 2)."""
        if not is_secret(a):
            return np.multiply(a, a)
        t = self._take(SQUARE, (a.dims,))
        if scale is not None:
            t = t.rescaled(scale)
            return await beaver.beaver_square(a, t, self.ctx, charge=False)
        return await beaver.beaver_square(a, t, self.ctx)

    async def reveal(self, a):
        if not is_secret(a):
            return np.asarray(a, dtype=np.float64)
        return await self.ctx.all_reduce(a.share)

    def charge_exp(self, n: int, beta: float, count: int):
        ledger_charge(self.ctx.ledger, "exp_chain", count, n=n, beta=beta, gamma=self.ctx.triples.gamma)
