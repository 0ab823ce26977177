"""Minibatched stochastic gradient descent for GLMs, public or private.

One step with learning rate ``eta``, minibatch ``(R, S)`` of ``m`` rows and
weight decay ``rho``::

    mu = g^{-1}(R w + c)
    w <- w + (eta / m) R^T (S - mu) - eta rho w
    c <- c + (eta / m) sum_rows (S - mu)

The bias is not decayed.  Probit uses this same logistic-form update with
the normal CDF in place of the logistic function.

Private training keeps the design matrix, targets, weights and bias
secret-shared throughout; only the minibatch row indices are public.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..approx import _PUBLIC
from ..errors import TrainingDiverged
from ..leakage import LeakageLedger
from ..ops import PrivateOps
from ..runtime import ChannelStats, PartyContext, run_parties_simulated, run_sync
from ..tensor import STREAM_BATCHES, RandomSource
from ..triples import Dealer, DealerFeed
from .model import Dataset, GlmModel, TrainConfig, link_inverse_kernel, log_likelihood

log = logging.getLogger(__name__)


def _loss(model, data) -> float:
    return -log_likelihood(model, data)


async def sgd_step_kernel(ops, link, R, S, w, c, eta: float, rho: float, clamp: bool = True):
    """One update; works on plain arrays or shares alike."""
    m = R.shape[0]
    theta = (await ops.matmul(R, w)) + c
    mu = await link_inverse_kernel(ops, link, theta, clamp)
    resid = S - mu
    grad = await ops.matmul(R.T, resid)
    w_new = w + grad * (eta / m)
    if rho:
        w_new = w_new - w * (eta * rho)
    c_new = c + resid.sum(axis=0, keepdims=True) * (eta / m)
    return w_new, c_new


def sgd_step(model: GlmModel, R, S, config: TrainConfig) -> GlmModel:
    """Public single step on minibatch rows ``R`` with targets ``S`` (``m x k``)."""
    R = np.asarray(R, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64).reshape(R.shape[0], -1)
    w, c = run_sync(
        sgd_step_kernel(_PUBLIC, model.link, R, S, model.w, model.c,
                        config.learning_rate, config.weight_decay, config.clamp)
    )
    return GlmModel(model.link, w, c)


def minibatch_indices(m: int, size: int, iterations: int, seed: int) -> np.ndarray:
    """Row indices for every step, ``iterations x size``.

    Rows are read off consecutive random permutations of ``range(m)`` (one
    per epoch), so every row is visited once per epoch when ``size``
    divides ``m``.
    """
    rng = RandomSource(seed, STREAM_BATCHES)
    total = iterations * size
    epochs = -(-total // m) if m else 0
    if total == 0:
        return np.zeros((0, size), dtype=np.int64)
    flat = np.concatenate([rng.permutation(m) for _ in range(epochs)])[:total]
    return flat.reshape(iterations, size)


@dataclass
class TrainResult:
    model: GlmModel
    loss_history: list
    ledger: LeakageLedger | None = None
    stats: ChannelStats | None = None
    party_outputs: list = field(default_factory=list)
    triple_log: list | None = None


def _check_finite(w, c, it):
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(c))):
        raise TrainingDiverged(f"parameters became non-finite at iteration {it}")


def train_public(model: GlmModel, data: Dataset, config: TrainConfig) -> TrainResult:
    S_all = data.targets_matrix(model.link, model.k)
    batches = minibatch_indices(data.m, config.minibatch, config.iterations, config.seed)
    w, c = model.w.copy(), model.c.copy()
    history = [_loss(model, data)]
    for it, idx in enumerate(batches, 1):
        w, c = run_sync(
            sgd_step_kernel(_PUBLIC, model.link, data.A[idx], S_all[idx], w, c,
                            config.learning_rate, config.weight_decay, config.clamp)
        )
        if config.record_every and it % config.record_every == 0:
            _check_finite(w, c, it)
            history.append(_loss(GlmModel(model.link, w, c), data))
    _check_finite(w, c, config.iterations)
    out = GlmModel(model.link, w, c)
    if not config.record_every or config.iterations % config.record_every:
        history.append(_loss(out, data))
    return TrainResult(out, history)


def private_training_program(link: str, config: TrainConfig, batches: np.ndarray):
    """Per-party coroutine factory for private training.

    The returned ``program(ctx, A, S, w, c)`` takes this party's shares and
    returns the revealed ``(w, c)``.
    """

    async def program(ctx: PartyContext, A, S, w, c):
        ops = PrivateOps(ctx)
        for idx in batches:
            w, c = await sgd_step_kernel(
                ops, link, A[idx], S[idx], w, c, config.learning_rate, config.weight_decay, config.clamp
            )
        w_pub = await ops.reveal(w)
        c_pub = await ops.reveal(c)
        return np.array(w_pub), np.array(c_pub)

    return program


def initial_private_inputs(model: GlmModel, data: Dataset, config: TrainConfig) -> list:
    """Plaintexts shared at the start of private training: ``A``, targets, ``w``, ``c``."""
    return [data.A, data.targets_matrix(model.link, model.k), model.w, model.c]


def train_private(model: GlmModel, data: Dataset, config: TrainConfig, record_triples: bool = False):
    """Simulate all parties in-process with a trusted dealer."""
    from ..private import share_inputs

    n = config.n_parties
    batches = minibatch_indices(data.m, config.minibatch, config.iterations, config.seed)
    shares = share_inputs(initial_private_inputs(model, data, config), config.gamma, config.seed, n)
    feed = DealerFeed(Dealer(config.gamma, config.seed, n), record=record_triples)
    contexts = [PartyContext(i, n, triples=feed.for_party(i), ledger=LeakageLedger()) for i in range(n)]
    step = private_training_program(model.link, config, batches)

    async def program(ctx):
        return await step(ctx, *shares[ctx.party_id])

    stats = ChannelStats()
    outputs = run_parties_simulated(program, n, contexts, stats)
    w, c = outputs[0]
    _check_finite(w, c, config.iterations)
    out = GlmModel(model.link, w, c)
    history = [_loss(model, data), _loss(out, data)]
    return TrainResult(out, history, contexts[0].ledger, stats, outputs, feed.log)


def train(model: GlmModel, data: Dataset, config: TrainConfig) -> TrainResult:
    """Train from ``model`` and return the final model with its loss history.

    The history holds the average negative log-likelihood (for the
    identity link ``||A w + c - t||^2 / m``).  Public runs record it every
    ``record_every`` steps; private runs record the first and last values only, since the
    intermediate parameters are never revealed.
    """
    if data.m == 0:
        raise TrainingDiverged("dataset is empty")
    if config.mode == "private":
        return train_private(model, data, config)
    return train_public(model, data, config)
