"""Command-line entry point.

    dynemb construct --input edges.txt --events 8000 --stride 4000 --out snaps/
    dynemb walk      --snapshots snaps/ --out walks/
    dynemb train     --snapshots snaps/ --out emb/
    dynemb eval link --input edges.txt --events 8000 --stride 4000 --out report/
    dynemb eval evolving --embeddings emb/ --ground-truth synth/ground_truth.txt
    dynemb synth     --alpha 2 --c 100 --n 500 --out synth/
    dynemb export    --embeddings emb/ --nodes 3,17 --out traj.csv

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .dbe import TrainConfig, train
from .errors import ConfigError, DynembError
from .evaluation import (config_hash, detect_evolving, export_trajectories,
                         link_prediction, ranking_metrics)
from .seeding import sub_seed
from .synth import SynthConfig, generate, manifest as synth_manifest
from .temporal_graph import (EventStream, build_by_events, build_by_time, ingest_edge_list,
                             time_split)
from .walks import random_walks

logger = logging.getLogger("dynemb")

WORKERS_ENV = "DYNEMB_WORKERS"

# default walk and training hyperparameters
DEFAULTS = {"walks": 10, "walk_len": 80, "dim": 128, "context": 4, "negatives": 10}

SWEEPABLE = {
    "window": float, "events": int, "stride": float, "walks": int, "walk_len": int,
    "dim": int, "context": int, "negatives": int, "lambda1": float, "lam": float,
    "lr": float, "epochs": int, "seed": int, "train_fraction": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_construct(p, required=True):
    g = p.add_argument_group("snapshot construction")
    g.add_argument("--input", "-i", required=required, help="temporal edge list")
    g.add_argument("--schema", help="column mapping, e.g. source=0,target=1,timestamp=3,weight=2")
    strategy = g.add_mutually_exclusive_group()
    strategy.add_argument("--window", "-w", type=float, help="time window (omega, dataset time units)")
    strategy.add_argument("--events", type=int, help="event window (epsilon, number of edges)")
    g.add_argument("--stride", type=float, help="window advance (delta t or delta e); defaults to the window")


def _add_walk(p):
    g = p.add_argument_group("random walks")
    g.add_argument("--walks", "-r", type=int, default=DEFAULTS["walks"], help="walks per node (r)")
    g.add_argument("--walk-len", "-L", type=int, default=DEFAULTS["walk_len"], help="walk length (L)")


def _add_train(p):
    g = p.add_argument_group("training")
    g.add_argument("--dim", "-D", type=int, default=DEFAULTS["dim"], help="embedding dimension (D)")
    g.add_argument("--context", type=int, default=DEFAULTS["context"], help="context size (cs), even")
    g.add_argument("--negatives", type=int, default=DEFAULTS["negatives"], help="negative samples (ns)")
    g.add_argument("--lambda1", type=float, default=None, help="prior precision (default: D)")
    g.add_argument("--lambda", dest="lam", type=float, default=1000.0, help="drift precision")
    g.add_argument("--lr", type=float, default=0.025)
    g.add_argument("--epochs", type=int, default=5)
    g.add_argument("--format", choices=["text", "npy"], default="text")
    g.add_argument("--pretrained", help="embedding directory used for initialisation")


def build_parser():
    p = _Parser(prog="dynemb", description="Dynamic network embeddings", allow_abbrev=False)
    p.add_argument("--config", help="JSON file of default option values")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("construct", help="build snapshots from a temporal edge list")
    _add_construct(c)
    c.add_argument("--train-fraction", type=float, help="keep only the leading fraction of edges")
    c.add_argument("--out", "-o", required=True)

    w = sub.add_parser("walk", help="generate random-walk corpora")
    w.add_argument("--snapshots", required=True)
    _add_walk(w)
    w.add_argument("--out", "-o", required=True)

    t = sub.add_parser("train", help="train dynamic Bernoulli embeddings")
    t.add_argument("--snapshots", help="snapshot directory from `construct`")
    _add_construct(t, required=False)
    t.add_argument("--walks-dir", help="walk corpora from `walk`; generated when omitted")
    _add_walk(t)
    _add_train(t)
    t.add_argument("--out", "-o", required=True)

    e = sub.add_parser("eval", help="evaluate embeddings")
    esub = e.add_subparsers(dest="task", required=True, parser_class=_Parser)
    lk = esub.add_parser("link", help="time-ordered link prediction")
    lk.add_argument("--embeddings", help="trained embeddings (with --train-edges/--test-edges)")
    lk.add_argument("--train-edges")
    lk.add_argument("--test-edges")
    _add_construct(lk, required=False)
    _add_walk(lk)
    _add_train(lk)
    lk.add_argument("--train-fraction", type=float, default=0.75)
    lk.add_argument("--sweep", action="append", default=[], metavar="NAME=v1,v2",
                    help="repeatable; runs the cross-product of all values")
    lk.add_argument("--out", "-o")
    ev = esub.add_parser("evolving", help="evolving-node detection against ground truth")
    ev.add_argument("--embeddings", required=True)
    ev.add_argument("--ground-truth", required=True)
    ev.add_argument("--k", type=int)
    ev.add_argument("--out", "-o")

    s = sub.add_parser("synth", help="generate a synthetic dynamic network")
    s.add_argument("--alpha", type=float, default=2.0, help="power-law exponent")
    s.add_argument("--c", type=float, default=100.0, help="power-law scale constant")
    s.add_argument("--n", type=int, default=500, help="number of nodes")
    s.add_argument("--T", type=int, default=10, help="number of timesteps")
    s.add_argument("--communities", type=int, default=4)
    s.add_argument("--evolving-fraction", type=float, default=0.10)
    s.add_argument("--intra-ratio", type=float, default=0.8)
    s.add_argument("--stable-rewire", type=float, default=0.1)
    s.add_argument("--out", "-o", required=True)

    x = sub.add_parser("export", help="export node trajectories as CSV")
    x.add_argument("--embeddings", required=True)
    x.add_argument("--nodes", help="comma-separated node IDs (default: detected evolving nodes)")
    x.add_argument("--out", "-o")
    for parser in (c, w, t, lk, ev, s, x):
        parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed")
    return p


def _parse_schema(text):
    if not text:
        return None
    out = {}
    for item in text.split(","):
        key, _, value = item.partition("=")
        if key not in ("source", "target", "timestamp", "weight") or not value.isdigit():
            raise ConfigError(f"bad schema entry {item!r}")
        out[key] = int(value)
    return out


def _construct(args, stream):
    if args.events is not None:
        stride = args.stride if args.stride is not None else args.events
        return build_by_events(stream, args.events, stride)
    if args.window is not None:
        stride = args.stride if args.stride is not None else args.window
        return build_by_time(stream, args.window, stride)
    raise ConfigError("one of --window or --events is required")


def _train_config(args, seed):
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    return TrainConfig(dim=args.dim, context=args.context, negatives=args.negatives,
                       lambda1=args.lambda1, lam=args.lam, lr=args.lr, epochs=args.epochs,
                       seed=seed, workers=workers)


def _banner(args, config):
    print(f"D={config.dim} L={args.walk_len} r={args.walks} cs={config.context} "
          f"ns={config.negatives} lambda1={config.lambda1:g} lambda={config.lam:g} "
          f"lr={config.lr:g} epochs={config.epochs} seed={config.seed} workers={config.workers}",
          file=sys.stderr)


def _record(args):
    rec = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"argv": sys.argv[1:], "args": rec}


def cmd_construct(args):
    stream = ingest_edge_list(args.input, _parse_schema(args.schema))
    if args.train_fraction:
        stream, _ = time_split(stream, args.train_fraction)
    net = _construct(args, stream)
    dio.write_snapshots(net, args.out, extra={"source": str(args.input), "self_loops_skipped":
                                              stream.self_loops_skipped, "command": _record(args)})
    print(f"T={net.T} strategy={net.strategy} window={net.window:g} stride={net.stride:g} "
          f"gamma={net.gamma:g} nodes={net.num_nodes}")
    return 0


def cmd_walk(args):
    net = dio.read_snapshots(args.snapshots)
    seed = sub_seed(args.seed, "walk")
    walksets = random_walks(net, args.walks, args.walk_len, seed)
    dio.write_walks(walksets, net.labels, args.out, extra={"r": args.walks, "L": args.walk_len,
                                                            "command": _record(args)})
    print(f"T={net.T} walks={sum(len(w) for w in walksets)}")
    return 0


def _fit(args, net):
    config = _train_config(args, sub_seed(args.seed, "train"))
    _banner(args, config)
    if getattr(args, "walks_dir", None):
        walksets = dio.read_walks(args.walks_dir, net.labels)
    else:
        walksets = random_walks(net, args.walks, args.walk_len, sub_seed(args.seed, "walk"))
    pretrained = None
    if args.pretrained:
        config.init = "pretrained"
        pretrained = dio.read_pretrained(args.pretrained, net.labels)
    return train(net, walksets, config, pretrained=pretrained)


def cmd_train(args):
    if args.snapshots and args.input:
        raise ConfigError("give either --snapshots or --input, not both")
    if args.snapshots:
        net = dio.read_snapshots(args.snapshots)
    elif not args.input:
        raise ConfigError("train needs --snapshots or --input")
    else:
        net = _construct(args, ingest_edge_list(args.input, _parse_schema(args.schema)))
    emb = _fit(args, net)
    dio.write_embeddings(emb, args.out, fmt=args.format,
                         extra={"walks": {"r": args.walks, "L": args.walk_len}, "command": _record(args)})
    print(f"T={emb.T} D={emb.D} objective={emb.objective[-1]:.6g}")
    return 0


def _sweep_grid(items):
    axes = []
    for item in items:
        name, _, values = item.partition("=")
        key = name.replace("-", "_")
        key = "lam" if key == "lambda" else key
        if key not in SWEEPABLE or not values:
            raise ConfigError(f"cannot sweep {name!r}")
        axes.append([(key, SWEEPABLE[key](v)) for v in values.split(",")])
    return [dict(combo) for combo in itertools.product(*axes)] if axes else [{}]


def _link_once(args):
    if args.embeddings:
        if not (args.train_edges and args.test_edges):
            raise ConfigError("--embeddings needs --train-edges and --test-edges")
        emb = dio.read_embeddings(args.embeddings)
        schema = _parse_schema(args.schema)
        train_s = ingest_edge_list(args.train_edges, schema)
        test_s = ingest_edge_list(args.test_edges, schema)
        train_s, test_s = _relabel(train_s, test_s, emb.labels)
    else:
        if not args.input:
            raise ConfigError("eval link needs --input or --embeddings")
        stream = ingest_edge_list(args.input, _parse_schema(args.schema))
        train_s, test_s = time_split(stream, args.train_fraction)
        net = _construct(args, train_s)
        emb = _fit(args, net)
    return link_prediction(emb, train_s, test_s, seed=sub_seed(args.seed, "eval"))


def _relabel(train_s, test_s, labels):
    """Re-index both streams onto the embedding vocabulary."""
    index = {int(l): i for i, l in enumerate(labels)}

    def conv(s):
        keep = np.array([int(s.labels[a]) in index and int(s.labels[b]) in index
                         for a, b in zip(s.source, s.target)], dtype=bool)
        if not keep.all():
            logger.warning("dropping %d edges with nodes outside the embedding vocabulary", int((~keep).sum()))
        src = np.array([index[int(s.labels[a])] for a in s.source[keep]], dtype=np.int64)
        dst = np.array([index[int(s.labels[b])] for b in s.target[keep]], dtype=np.int64)
        return EventStream(src, dst, s.timestamp[keep], s.weight[keep], np.asarray(labels))

    return conv(train_s), conv(test_s)


def cmd_eval(args):
    if args.task == "evolving":
        emb = dio.read_embeddings(args.embeddings)
        truth = dio.read_ground_truth(args.ground_truth)
        ranking = detect_evolving(emb)
        report = ranking_metrics(emb.labels[ranking.evolving_ranking], truth, k=args.k)
        report.seed = args.seed
        report.config_hash = config_hash(emb.config)
        _emit(report.to_json(indent=2), args.out, "report.json")
        return 0

    runs = _sweep_grid(args.sweep)
    results = []
    for k, overrides in enumerate(runs):
        run_args = argparse.Namespace(**{**vars(args), **overrides})
        report = _link_once(run_args)
        results.append({"params": overrides, **json.loads(report.to_json())})
        if args.out and len(runs) > 1:
            _emit(report.to_json(indent=2), Path(args.out) / f"run_{k:03d}", "report.json")
        elif len(runs) == 1:
            _emit(report.to_json(indent=2), args.out, "report.json")
    if len(runs) > 1:
        _emit(json.dumps({"runs": results}, indent=2), args.out, "sweep.json")
    return 0


def _emit(text, out, name):
    if out is None:
        print(text)
        return
    path = Path(out)
    if path.suffix != ".json":
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    path.write_text(text + "\n")
    print(text)


def cmd_synth(args):
    cfg = SynthConfig(N=args.n, alpha_pl=args.alpha, C=args.c, num_communities=args.communities,
                      evolving_fraction=args.evolving_fraction, T=args.T, intra_ratio=args.intra_ratio,
                      stable_rewire_prob=args.stable_rewire, seed=sub_seed(args.seed, "synth"))
    sn = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.txt", "w") as fh:
        for t, E in enumerate(sn.edges, start=1):
            for u, v in E:
                fh.write(f"{u} {v} {t}\n")
    for t, E in enumerate(sn.edges, start=1):
        (out / f"timestep_{t:04d}.txt").write_text("".join(f"{u} {v} {t}\n" for u, v in E))
    dio.write_ground_truth(out / "ground_truth.txt", sn)
    man = synth_manifest(sn)
    man["command"] = _record(args)
    dio.write_manifest(out, man)
    print(f"N={cfg.N} T={cfg.T} evolving={len(sn.evolving_nodes)} temporal_edges={man['temporal_edges']}")
    return 0


def cmd_export(args):
    emb = dio.read_embeddings(args.embeddings)
    ranking = detect_evolving(emb) if emb.T > 1 else None
    if args.nodes:
        nodes = [int(x) for x in args.nodes.split(",") if x.strip()]
    elif ranking is not None:
        nodes = [int(x) for x in emb.labels[ranking.evolving_nodes()]]
    else:
        raise ConfigError("--nodes is required for single-timestep embeddings")
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                export_trajectories(emb, nodes, ranking, out=fh)
        else:
            sys.stdout.write(export_trajectories(emb, nodes, ranking))
    except KeyError as exc:
        raise DynembError(str(exc.args[0])) from None
    return 0


COMMANDS = {"construct": cmd_construct, "walk": cmd_walk, "train": cmd_train,
            "eval": cmd_eval, "synth": cmd_synth, "export": cmd_export}


def _apply_config(parser, argv):
    """Re-parse with defaults taken from --config, so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        values = json.loads(Path(known.config).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from None
    values = {k.replace("-", "_"): v for k, v in values.items()}
    values = {("lam" if k == "lambda" else k): v for k, v in values.items()}
    args = parser.parse_args(argv)
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in values.items():
        if key in vars(args) and key not in explicit:
            setattr(args, key, value)
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"dynemb: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"dynemb: {exc}", file=sys.stderr)
        return 1
    except DynembError as exc:
        print(f"dynemb: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, ValueError) as exc:
        print(f"dynemb: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
