"""Synthetic benchmark experiments, simulated in-process or run over TCP.

Each experiment fixes a synthetic problem, a link and training settings:

=============  ===========  ================  ==========
name           link         problem           classes
=============  ===========  ================  ==========
linear         identity     ``synth_linear``  1
logit          logit        ``synth_binary``  1
probit         probit       ``synth_binary``  1
poisson        log          ``synth_poisson`` 1
multinomial2   multinomial  ``synth_binary``  2
=============  ===========  ================  ==========

A distributed run needs its correlated randomness ahead of time.
:func:`deal_experiment` records the triple requests of a single training
step, replays them for every step through a dealer seeded like the one
:func:`simulate` uses, and writes each party's triple files together with
its shares of the data.  :func:`run_party` then reproduces the simulated
run bit for bit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .glm import GlmModel, TrainConfig, discrepancy, metrics, train
from .glm.sgd import initial_private_inputs, minibatch_indices, private_training_program, train_private
from .glm.synth import SynthProblem, synth_binary, synth_linear, synth_poisson
from .leakage import LeakageLedger
from .private import share_inputs
from .runtime import PartyContext, TcpTransport, run_party_tcp
from .sharing import SecretTensor
from .triples import KIND_NAMES, Dealer, TripleBank, TripleFileWriter

log = logging.getLogger(__name__)

SCHEMA = 1
EXPERIMENTS = {
    "linear": ("identity", 1),
    "logit": ("logit", 1),
    "probit": ("probit", 1),
    "poisson": ("log", 1),
    "multinomial2": ("multinomial", 2),
}
DATA_FILE = "data.npz"
MANIFEST = "manifest.json"


@dataclass
class ExperimentSetup:
    name: str
    problem: SynthProblem
    model: GlmModel
    config: TrainConfig


def setup(
    name: str,
    gamma: float = 1e5,
    seed: int = 0,
    iterations: int = 10_000,
    minibatch: int = 8,
    mode: str = "private",
    learning_rate: float | None = None,
    n_parties: int = 2,
) -> ExperimentSetup:
    """Problem, zero-initialized model and training settings for ``name``."""
    if name not in EXPERIMENTS:
        raise InvalidArgument(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    link, k = EXPERIMENTS[name]
    if name == "linear":
        problem = synth_linear(seed=seed)
    elif name == "poisson":
        problem = synth_poisson(seed=seed)
    else:
        problem = synth_binary(link="probit" if name == "probit" else "logit", seed=seed)
    over = dict(gamma=gamma, seed=seed, iterations=iterations, minibatch=minibatch, mode=mode,
                n_parties=n_parties)
    if learning_rate is not None:
        over["learning_rate"] = learning_rate
    # the two-class softmax stands in for logistic regression, so no decay
    over["weight_decay"] = 0.0
    config = TrainConfig.for_link(link, **over)
    model = GlmModel.zeros(link, problem.data.n, k)
    return ExperimentSetup(name, problem, model, config)


def report(exp: ExperimentSetup, model: GlmModel, ledger=None, rounds=None) -> dict:
    """Metrics of a trained model in the versioned result schema."""
    data = exp.problem.data
    out = {
        "schema": SCHEMA,
        "experiment": exp.name,
        "link": model.link,
        "mode": exp.config.mode,
        "gamma": exp.config.gamma,
        "seed": exp.config.seed,
        "iterations": exp.config.iterations,
        "minibatch": exp.config.minibatch,
        "learning_rate": exp.config.learning_rate,
        "metrics": metrics(model, data),
        "discrepancy": discrepancy(model.direction(), exp.problem.w),
        "weights": [float(v) for v in model.w.ravel()],
        "bias": [float(v) for v in model.c.ravel()],
    }
    if exp.name == "poisson":
        ideal = GlmModel("log", exp.problem.w, exp.problem.c)
        out["ideal_avg_neg_log_likelihood"] = metrics(ideal, data)["avg_neg_log_likelihood"]
    if rounds is not None:
        out["rounds"] = int(rounds)
    if ledger is not None:
        out["leakage_bits"] = ledger.total_bits
    return out


def simulate(name: str, **kw) -> dict:
    """Train an experiment with every party in this process; returns the report."""
    exp = setup(name, **kw)
    result = train(exp.model, exp.problem.data, exp.config)
    rounds = result.stats.rounds if result.stats is not None else None
    return report(exp, result.model, result.ledger, rounds)


def step_triple_log(exp: ExperimentSetup) -> list:
    """``(kind, shapes)`` requests made by one private training step."""
    one = TrainConfig(**{**exp.config.to_dict(), "iterations": 1, "mode": "private"})
    return train_private(exp.model, exp.problem.data, one, record_triples=True).triple_log


def deal_experiment(name: str, out_dir, **kw) -> dict:
    """Write ``party<i>/`` directories with triple files, data shares and a manifest.

    Returns the per-kind triple counts.
    """
    exp = setup(name, mode="private", **kw)
    cfg = exp.config
    n = cfg.n_parties
    per_step = step_triple_log(exp)
    counts = {k: sum(1 for kind, _ in per_step if kind == k) * cfg.iterations for k in KIND_NAMES}
    out = Path(out_dir)
    dirs = [out / f"party{i}" for i in range(n)]
    for d in dirs:
        d.mkdir(parents=True, exist_ok=True)
    writers = {
        k: [TripleFileWriter(d / f"{KIND_NAMES[k]}.fpt", k, cfg.gamma, c) for d in dirs]
        for k, c in counts.items() if c
    }
    dealer = Dealer(cfg.gamma, cfg.seed, n)
    try:
        for _ in range(cfg.iterations):
            for kind, shapes in per_step:
                for w, t in zip(writers[kind], dealer.deal(kind, shapes)):
                    w.write(t)
    finally:
        for ws in writers.values():
            for w in ws:
                w.close()

    shares = share_inputs(initial_private_inputs(exp.model, exp.problem.data, cfg), cfg.gamma, cfg.seed, n)
    manifest = {
        "schema": SCHEMA,
        "experiment": name,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "extra"},
        "triple_counts": {KIND_NAMES[k]: c for k, c in counts.items()},
    }
    for i, d in enumerate(dirs):
        np.savez(d / DATA_FILE, *[s.share for s in shares[i]])
        (d / MANIFEST).write_text(json.dumps({**manifest, "party": i}, indent=1))
    log.info("dealt %s for %d steps into %s", manifest["triple_counts"], cfg.iterations, out)
    return manifest["triple_counts"]


def load_party_dir(directory):
    """Manifest, data shares and triple bank of one dealt party directory."""
    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except FileNotFoundError:
        raise FormatError(f"{d} has no {MANIFEST}; run deal --experiment first") from None
    if manifest.get("schema") != SCHEMA:
        raise FormatError(f"{d / MANIFEST}: unsupported schema {manifest.get('schema')!r}")
    with np.load(d / DATA_FILE) as z:
        arrays = [z[f"arr_{i}"] for i in range(len(z.files))]
    return manifest, arrays, TripleBank.open_dir(d)


def run_party(party_id: int, peers, triples_dir, experiment: str | None = None,
              timeout: float = 30.0) -> dict:
    """Run one party of a dealt experiment over TCP and report the revealed model."""
    manifest, arrays, bank = load_party_dir(triples_dir)
    if experiment is not None and experiment != manifest["experiment"]:
        raise InvalidArgument(
            f"triples were dealt for {manifest['experiment']!r}, not {experiment!r}"
        )
    if manifest["party"] != party_id:
        raise InvalidArgument(f"{triples_dir} holds party {manifest['party']}'s material")
    cfg = manifest["config"]
    n = cfg["n_parties"]
    if len(peers) != n:
        raise InvalidArgument(f"experiment has {n} parties but {len(peers)} peer addresses")
    exp = setup(manifest["experiment"], gamma=cfg["gamma"], seed=cfg["seed"],
                iterations=cfg["iterations"], minibatch=cfg["minibatch"],
                learning_rate=cfg["learning_rate"], n_parties=n)
    shares = [SecretTensor(a, party_id, n) for a in arrays]
    batches = minibatch_indices(exp.problem.data.m, exp.config.minibatch, exp.config.iterations,
                                exp.config.seed)
    step = private_training_program(exp.model.link, exp.config, batches)
    ctx = PartyContext(party_id, n, triples=bank, ledger=LeakageLedger())

    async def program(c):
        return await step(c, *shares)

    transport = TcpTransport.open(party_id, peers, timeout)
    try:
        w, c = run_party_tcp(program, ctx, transport)
    finally:
        transport.close()
        bank.close()
    return report(exp, GlmModel(exp.model.link, w, c), ctx.ledger)
