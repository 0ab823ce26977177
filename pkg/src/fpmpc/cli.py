"""Command-line entry points.

Results go to stdout as JSON (``"schema": 1``, floats with 17 significant
digits); logs go to stderr.  Contract violations exit with status 2.

Options left unset fall back to a ``key = value`` config file given with
``--config`` (keys are option names with dashes or underscores), and the
seed finally falls back to the ``FPMPC_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FpmpcError, InvalidArgument
from .triples import KIND_BY_NAME, KIND_NAMES

log = logging.getLogger("fpmpc")

SCHEMA = 1


# --------------------------------------------------------------------------
# output


def _encode(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits.

    >>> dumps({"x": 0.1})
    '{"x": 0.10000000000000001}'
    """
    return _encode(obj)


def _emit(obj: dict):
    out = {"schema": SCHEMA, **obj}
    sys.stdout.write(dumps(out) + "\n")
    sys.stdout.flush()


# --------------------------------------------------------------------------
# option resolution


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, quotes are stripped."""
    conf = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidArgument(f"{path}:{lineno}: expected key = value")
        conf[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return conf


def _resolve(args, name: str, default, cast=str):
    v = getattr(args, name, None)
    if v is not None:
        return v
    if name in args.conf:
        try:
            return cast(args.conf[name])
        except ValueError:
            raise InvalidArgument(f"config value for {name} is not a valid {cast.__name__}") from None
    if name == "seed" and os.environ.get("FPMPC_SEED"):
        try:
            return int(os.environ["FPMPC_SEED"])
        except ValueError:
            raise InvalidArgument("FPMPC_SEED must be an integer") from None
    return default


def _dims(text: str) -> tuple:
    """``"8x1,1x1"`` to ``((8, 1), (1, 1))``."""
    try:
        return tuple(tuple(int(d) for d in part.split("x")) for part in text.split(","))
    except ValueError:
        raise InvalidArgument(f"bad dims {text!r}; expected e.g. 8x1,1x1") from None


def _columns(text: str | None, n: int) -> np.ndarray:
    """Column list such as ``"0-9,12"`` to a boolean mask of width ``n``."""
    mask = np.zeros(n, dtype=bool)
    if not text:
        return mask
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        try:
            a, b = int(lo), int(hi or lo)
        except ValueError:
            raise InvalidArgument(f"bad column list {text!r}") from None
        if not 0 <= a <= b < n:
            raise InvalidArgument(f"columns {part} outside [0, {n})")
        mask[a:b + 1] = True
    return mask


# --------------------------------------------------------------------------
# commands


def cmd_deal(args):
    from . import experiments
    from .triples import deal_triples

    seed = _resolve(args, "seed", 0, int)
    gamma = _resolve(args, "gamma", 1e5, float)
    parties = _resolve(args, "parties", 2, int)
    out = Path(args.out_dir)
    if args.experiment:
        counts = experiments.deal_experiment(
            args.experiment, out, gamma=gamma, seed=seed,
            iterations=_resolve(args, "iters", 10_000, int),
            minibatch=_resolve(args, "minibatch", 8, int),
            learning_rate=_resolve(args, "lr", None, float), n_parties=parties,
        )
        _emit({"command": "deal", "experiment": args.experiment, "out_dir": str(out),
               "triple_counts": counts})
        return
    if not args.kind:
        raise InvalidArgument("deal needs --kind or --experiment")
    kind = KIND_BY_NAME[args.kind]
    dims = _dims(args.dims) if args.dims else ((1, 1),) * (1 if kind == KIND_BY_NAME["square"] else 2)
    count = _resolve(args, "count", 1, int)
    stores = deal_triples(kind, count, gamma, seed, dims, parties)
    files = []
    for i, store in enumerate(stores):
        d = out / f"party{i}"
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{args.kind}.fpt"
        store.save(path)
        files.append(str(path))
    _emit({"command": "deal", "kind": args.kind, "count": count, "gamma": gamma, "files": files})


def _experiment_kw(args) -> dict:
    return dict(
        gamma=_resolve(args, "gamma", 1e5, float),
        seed=_resolve(args, "seed", 0, int),
        iterations=_resolve(args, "iters", 10_000, int),
        minibatch=_resolve(args, "minibatch", 8, int),
        learning_rate=_resolve(args, "lr", None, float),
        n_parties=_resolve(args, "parties", 2, int),
    )


def cmd_simulate(args):
    from . import experiments

    kw = _experiment_kw(args)
    kw["mode"] = _resolve(args, "mode", "private")
    _emit(experiments.simulate(args.experiment, **kw))


def cmd_run_party(args):
    from . import experiments

    peers = [p.strip() for p in args.peers.split(",") if p.strip()]
    _emit(experiments.run_party(args.id, peers, args.triples, args.experiment,
                                timeout=_resolve(args, "timeout", 30.0, float)))


def _load_data(args, link: str):
    from .ingest import load_dataset, normalize_covariates
    from .glm import Dataset

    fmt = _resolve(args, "format", None)
    if fmt is None:
        raise InvalidArgument("--format is required")
    kw = {}
    if fmt == "csv":
        kw["covariates"] = _resolve(args, "covariates", 3, int)
    data = load_dataset(args.data, fmt, getattr(args, "labels", None), **kw)
    norm = _resolve(args, "normalize", None)
    if norm:
        data = normalize_covariates(data, _columns(norm, data.n))
    positive = _resolve(args, "positive_class", None, float)
    if positive is not None:
        data = Dataset(data.A, (data.t == positive).astype(np.float64))
    if link in ("logit", "probit") and not np.all(np.isin(data.t, (0.0, 1.0))):
        raise InvalidArgument(f"{link} needs 0/1 labels; use --positive-class to binarize")
    return data


def cmd_train(args):
    from .glm import GlmModel, TrainConfig, metrics, train

    link = _resolve(args, "link", None)
    if link is None:
        raise InvalidArgument("--link is required")
    data = _load_data(args, link)
    k = _resolve(args, "classes", None, int)
    if k is None:
        k = int(data.t.max()) + 1 if link == "multinomial" else 1
    over = dict(
        minibatch=_resolve(args, "minibatch", 8, int),
        iterations=_resolve(args, "iters", 10_000, int),
        mode=_resolve(args, "mode", "public"),
        gamma=_resolve(args, "gamma", 1e5, float),
        seed=_resolve(args, "seed", 0, int),
    )
    for name in ("lr", "weight_decay"):
        v = _resolve(args, name, None, float)
        if v is not None:
            over["learning_rate" if name == "lr" else name] = v
    config = TrainConfig.for_link(link, **over)
    result = train(GlmModel.zeros(link, data.n, k), data, config)
    out = {"command": "train", "link": link, "mode": config.mode, "metrics": metrics(result.model, data),
           "loss_history": result.loss_history}
    if result.ledger is not None:
        out["leakage_bits"] = result.ledger.total_bits
    if args.out:
        result.model.save(args.out, config, result.loss_history)
        out["checkpoint"] = str(args.out)
    _emit(out)


def cmd_eval(args):
    from .glm import GlmModel, metrics

    model = GlmModel.load(args.checkpoint)
    data = _load_data(args, model.link)
    if data.n != model.n:
        raise InvalidArgument(f"data has {data.n} covariates, model expects {model.n}")
    _emit({"command": "eval", "link": model.link, "metrics": metrics(model, data)})


def cmd_leakage_report(args):
    from .leakage import ledger_from_plan

    try:
        plan = json.loads(Path(args.plan).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{args.plan}: not JSON ({exc})") from None
    if isinstance(plan, dict):
        plan = plan.get("events", [plan])
    if not isinstance(plan, list) or not all(isinstance(e, dict) and "kind" in e for e in plan):
        raise InvalidArgument("plan must be a list of events, each with a 'kind'")
    try:
        ledger = ledger_from_plan(plan)
    except KeyError as exc:
        raise InvalidArgument(f"plan event is missing parameter {exc}") from None
    _emit(ledger.to_dict())


def cmd_validate(args):
    from . import validation

    checks = validation.run(args.suite, seed=_resolve(args, "seed", 0, int))
    _emit({"command": "validate", "suite": args.suite, "checks": checks,
           "passed": all(c["passed"] for c in checks)})
    if not all(c["passed"] for c in checks):
        raise SystemExit(1)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpmpc", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="key = value file supplying defaults for unset options")
    p.add_argument("--log-level", default="WARNING", help="stderr log level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp, *names):
        opts = {
            "gamma": dict(type=float, help="masking half-width (default 1e5)"),
            "seed": dict(type=int, help="random seed (default $FPMPC_SEED or 0)"),
            "iters": dict(type=int, help="SGD iterations (default 10000)"),
            "minibatch": dict(type=int, help="minibatch size (default 8)"),
            "lr": dict(type=float, help="learning rate (default: per-link preset)"),
            "parties": dict(type=int, help="number of parties (default 2)"),
        }
        for n in names:
            sp.add_argument(f"--{n}", **opts[n])

    sp = sub.add_parser("deal", help="write per-party Beaver triple files")
    sp.add_argument("--kind", choices=sorted(KIND_NAMES.values()))
    sp.add_argument("--count", type=int, help="number of triples (default 1)")
    sp.add_argument("--dims", help="input dims, e.g. 8x1,1x1 (square takes one)")
    sp.add_argument("--experiment", help="deal everything a synthetic experiment consumes")
    sp.add_argument("--out-dir", required=True)
    common(sp, "gamma", "seed", "iters", "minibatch", "lr", "parties")
    sp.set_defaults(func=cmd_deal)

    from .experiments import EXPERIMENTS

    sp = sub.add_parser("simulate", help="run a synthetic experiment with all parties in-process")
    sp.add_argument("--experiment", required=True, choices=sorted(EXPERIMENTS))
    sp.add_argument("--mode", choices=("public", "private"), help="default private")
    common(sp, "gamma", "seed", "iters", "minibatch", "lr", "parties")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run-party", help="run one party of a dealt experiment over TCP")
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--peers", required=True, help="comma-separated host:port, party 0 first")
    sp.add_argument("--triples", required=True, help="this party's directory from deal --experiment")
    sp.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    sp.add_argument("--timeout", type=float, help="seconds to wait on a peer (default 30)")
    sp.set_defaults(func=cmd_run_party)

    def data_opts(sp):
        sp.add_argument("--data", required=True)
        sp.add_argument("--labels", help="IDX label file")
        sp.add_argument("--format", choices=("idx", "libsvm", "csv"))
        sp.add_argument("--covariates", type=int, choices=(0, 1, 2, 3), help="CSV covariate set")
        sp.add_argument("--normalize", help="integer-valued columns to center and scale, e.g. 0-9")
        sp.add_argument("--positive-class", type=float, help="binarize labels as label == value")

    from .glm import LINKS

    sp = sub.add_parser("train", help="fit a GLM and write a checkpoint")
    sp.add_argument("--link", choices=LINKS)
    data_opts(sp)
    sp.add_argument("--mode", choices=("public", "private"))
    sp.add_argument("--classes", type=int, help="multinomial class count")
    sp.add_argument("--weight-decay", type=float)
    sp.add_argument("--out", help="checkpoint path (JSON)")
    common(sp, "gamma", "seed", "iters", "minibatch", "lr")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="metrics of a checkpoint on a dataset")
    sp.add_argument("--checkpoint", required=True)
    data_opts(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("leakage-report", help="leakage budget of a protocol plan")
    sp.add_argument("--plan", required=True, help='JSON list of events such as {"kind": "masking", '
                    '"beta": 1, "gamma": 1e5, "count": 1}')
    sp.set_defaults(func=cmd_leakage_report)

    sp = sub.add_parser("validate", help="numerical self-checks")
    sp.add_argument("--suite", choices=("quick", "full"), default="quick")
    common(sp, "seed")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.conf = read_config(args.config) if args.config else {}
        args.func(args)
    except FpmpcError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
