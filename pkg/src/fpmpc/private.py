"""In-process private evaluation of kernels.

:func:`evaluate_private` secret-shares plaintext inputs, runs a kernel for
every party on the simulated channel with triples from an in-process
dealer, and reconstructs the result.  It is the quickest way to compare a
private computation with its public counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .leakage import LeakageLedger
from .ops import PrivateOps, is_secret
from .runtime import ChannelStats, PartyContext, run_parties_simulated
from .sharing import NoiseSpec, reconstruct, share_n, share_two
from .tensor import STREAM_SHARING, RandomSource, as_tensor
from .triples import Dealer, DealerFeed


def data_beta(x) -> float:
    """Smallest integer bound ``>= 1`` on ``max |x|``."""
    x = np.asarray(x)
    m = float(np.max(np.abs(x))) if x.size else 0.0
    return float(max(1, math.ceil(m)))


def share_inputs(values: Sequence, gamma: float, seed: int, n_parties: int = 2, session: int = 0) -> list:
    """Share each plaintext input; returns ``shares[party][i]``."""
    rng = RandomSource(seed, STREAM_SHARING)
    per_party = [[] for _ in range(n_parties)]
    for v in values:
        v = as_tensor(v)
        noise = NoiseSpec(gamma, data_beta(v))
        if n_parties == 2:
            shares = share_two(v, noise, rng, session)
        else:
            shares = share_n(v, n_parties, noise, rng, session)
        for p in range(n_parties):
            per_party[p].append(shares[p])
    return per_party


@dataclass
class PrivateResult:
    value: object
    ledgers: list = field(default_factory=list)
    stats: ChannelStats = field(default_factory=ChannelStats)
    triple_log: list | None = None


def _reconstruct_tree(outputs):
    first = outputs[0]
    if isinstance(first, (tuple, list)):
        return type(first)(_reconstruct_tree([o[i] for o in outputs]) for i in range(len(first)))
    if is_secret(first):
        return reconstruct(outputs)
    return first


def evaluate_private(
    kernel: Callable,
    inputs: Sequence,
    gamma: float = 1e5,
    seed: int = 0,
    n_parties: int = 2,
    record_triples: bool = False,
) -> PrivateResult:
    """Run ``await kernel(ops, *shared_inputs)`` privately and reconstruct.

    The kernel may return a secret, a public array, or a tuple of those.
    """
    if n_parties < 2:
        raise InvalidArgument("need at least two parties")
    shares = share_inputs(inputs, gamma, seed, n_parties)
    feed = DealerFeed(Dealer(gamma, seed, n_parties), record=record_triples)
    contexts = [
        PartyContext(i, n_parties, triples=feed.for_party(i), ledger=LeakageLedger())
        for i in range(n_parties)
    ]

    async def program(ctx):
        return await kernel(PrivateOps(ctx), *shares[ctx.party_id])

    stats = ChannelStats()
    outputs = run_parties_simulated(program, n_parties, contexts, stats)
    return PrivateResult(
        _reconstruct_tree(outputs), [c.ledger for c in contexts], stats, feed.log
    )
