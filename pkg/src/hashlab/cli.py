"""Command-line front end: train, encode, eval, retrieve, compare, synth.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Every artifact is written atomically and lands in a fixed output layout:
``config.ini`` snapshot, ``log-q*.csv``, ``checkpoints/``, ``codes/``,
``metrics/`` under the --out directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import index, metrics
from .config import MetricOptions, load_experiment
from .data import ingest, synth_splits, export_raw
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    HashlabError,
    InfeasibleError,
    LengthMismatch,
    NumericError,
    ShapeError,
    UndefinedError,
)
from .head import HashHeadSpec, quantize
from .model import ModelSpec, encode as model_encode, init_model_params
from .nn.netconfig import load_network
from .train import TrainConfig, checkpoint_load, checkpoint_save, epsilon_at, init_state, train
from .triplet import sample_triplets

_DTYPES = {"f32": np.float32, "f64": np.float64}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(p):
    p.add_argument("--config", help="experiment config file (INI)")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--precision", choices=("f32", "f64"), help="arithmetic width")
    p.add_argument("--deterministic", action="store_true", help="force the reproducible f64 path")


def build_parser():
    top = _Parser(prog="hashlab", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train one model per configured bit width")
    _common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a dataset with a trained checkpoint")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset path (csv/raw/dir)")
    p.add_argument("--role", choices=("query", "database"), default="database",
                   help="which sub-network encodes (matters for query-independent sharing)")
    p.add_argument("--name", default="", help="basename for the code files (default: data stem)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="retrieval metrics between two code files")
    _common_flags(p)
    p.add_argument("--query-codes", required=True)
    p.add_argument("--query-labels", required=True)
    p.add_argument("--db-codes", required=True)
    p.add_argument("--db-labels", required=True)
    p.add_argument("--relevance", choices=("equal", "share-any"))
    p.add_argument("--truncate", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--topk", help="comma-separated cutoffs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="rank database codes against one query")
    _common_flags(p)
    p.add_argument("--db-codes", required=True)
    p.add_argument("--db-labels")
    p.add_argument("--query-codes", required=True)
    p.add_argument("--index", type=int, required=True, help="row of the query code file")
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("compare", help="train both variants along one axis and tabulate")
    _common_flags(p)
    p.add_argument("--axis", choices=("head", "sharing"), required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate disjoint train/query/database blob splits")
    _common_flags(p)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--train", type=int, default=300)
    p.add_argument("--query", type=int, default=60)
    p.add_argument("--database", type=int, default=300)
    p.add_argument("--shape", default="3x8x8")
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--brightness", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return top


def _load_cfg(args, require):
    if not args.config:
        raise ConfigError("this command needs --config")
    cfg = load_experiment(args.config, require=require)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train = TrainConfig(**{**_train_asdict(cfg.train), "seed": args.seed})
    if args.out:
        cfg.out = args.out
    if args.precision:
        cfg.precision = args.precision
    if args.deterministic:
        cfg.precision = "f64"
    return cfg


def _train_asdict(tc):
    from dataclasses import asdict

    return asdict(tc)


def _is_multilabel(labels):
    return any(isinstance(v, (set, frozenset)) for v in labels)


def _build_model(cfg, bits):
    net = load_network(cfg.network_path, bits=bits)
    d = int(np.prod(net.output_shape))
    head = HashHeadSpec(bits, d, mode=cfg.head_mode, beta=cfg.head_beta, threshold=cfg.head_threshold)
    return ModelSpec(net, head)


def _snapshot(cfg, out):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.source_text)


def _train_one(cfg, bits, train_cfg, ds, dtype, out, tag):
    model = _build_model(cfg, bits)
    items = ds.items.astype(dtype)
    state = init_state(model, train_cfg, lambda k: init_model_params(model, cfg.seed + k, dtype=dtype))
    multi = _is_multilabel(ds.labels)
    sampler = lambda rng, count: sample_triplets(ds.labels, count, rng, multilabel=multi)
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    log_path = os.path.join(out, f"log-{tag}.csv")
    with open(log_path, "w", encoding="utf-8", newline="") as log_fh:
        train(model, state, train_cfg, items, sampler, log_fh=log_fh)
    ck = os.path.join(out, "checkpoints", f"{tag}.hlck")
    checkpoint_save(state, model, train_cfg, ck)
    return ck, state, model


def cmd_train(args):
    cfg = _load_cfg(args, require=("network", "train"))
    dtype = _DTYPES[cfg.precision]
    ds = ingest(cfg.data["train"])
    _snapshot(cfg, cfg.out)
    for b in cfg.bits:
        ck, state, _ = _train_one(cfg, b, cfg.train, ds, dtype, cfg.out, f"q{b}")
        print(f"trained q={b}: {state.iteration} iterations, mean loss {state.mean_loss:.4f} -> {ck}")
    return 0


def _encode_dataset(state, model, train_cfg, ds, role, dtype):
    store = state.store_for(role)
    eps = epsilon_at(state.iteration, train_cfg)
    approx = model_encode(model, store, ds.items.astype(dtype), eps=eps)
    return approx, quantize(approx)


def cmd_encode(args):
    state, model, train_cfg = checkpoint_load(args.checkpoint)
    ds = ingest(args.data)
    dtype = _DTYPES[args.precision] if args.precision else state.store_for(args.role)["head.w"].dtype
    approx, bits = _encode_dataset(state, model, train_cfg, ds, args.role, dtype)
    out = args.out or "."
    codes_dir = os.path.join(out, "codes")
    os.makedirs(codes_dir, exist_ok=True)
    name = args.name or os.path.splitext(os.path.basename(os.fspath(args.data).rstrip("/")))[0]
    db = index.CodeDatabase.from_bits(bits, labels=ds.labels)
    code_path = os.path.join(codes_dir, f"{name}.hlbc")
    index.save_codes(db, code_path)
    index.save_labels(ds.labels, os.path.join(codes_dir, f"{name}.labels.csv"))
    with open(os.path.join(codes_dir, f"{name}.approx.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(f"c{i}" for i in range(approx.shape[1])) + "\n")
        for row in approx:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"encoded {len(ds)} items at q={model.head.bits} -> {code_path}")
    return 0


def _metric_options(args):
    opts = MetricOptions()
    if args.config:
        opts = load_experiment(args.config).metrics
    if args.relevance:
        opts.relevance = args.relevance
    if args.truncate is not None:
        opts.truncate = args.truncate
    if args.radius is not None:
        opts.radius = args.radius
    if args.topk:
        opts.topk = tuple(int(p) for p in args.topk.split(",") if p)
    return opts


def _evaluate_codes(qcodes, qlabels, dbcodes, dblabels, opts):
    queries = index.load_codes(qcodes, labels=index.load_labels(qlabels))
    db = index.load_codes(dbcodes, labels=index.load_labels(dblabels))
    rule = metrics.RelevanceRule(opts.relevance)
    return metrics.evaluate(
        queries,
        db,
        rule,
        truncate=opts.truncate or None,
        ks=list(opts.topk) or None,
        radius=opts.radius,
        denominator=opts.ap_denominator,
        empty=opts.empty_retrieval,
    )


def cmd_eval(args):
    opts = _metric_options(args)
    report = _evaluate_codes(args.query_codes, args.query_labels, args.db_codes, args.db_labels, opts)
    out = args.out or "."
    metrics.save_report(report, os.path.join(out, "metrics"))
    print(f"map {report.map:.6f}")
    print(f"precision@radius{opts.radius} {report.precision_at_radius2:.6f}")
    return 0


def cmd_retrieve(args):
    labels = index.load_labels(args.db_labels) if args.db_labels else None
    db = index.load_codes(args.db_codes, labels=labels)
    queries = index.load_codes(args.query_codes)
    if not 0 <= args.index < len(queries):
        raise DomainError(f"query index {args.index} outside [0, {len(queries)})")
    if args.k < 1 or args.k > len(db):
        raise DomainError(f"k must lie in [1, {len(db)}]")
    q = queries.code(args.index)
    order = index.rank_all(q, db)[: args.k]
    dists = index.all_distances(q, db)
    print("rank,db_index,distance" + (",label" if labels else ""))
    for rank, i in enumerate(order, start=1):
        row = f"{rank},{int(i)},{int(dists[i])}"
        if labels:
            row += f",{labels[int(i)]}"
        print(row)
    return 0


def cmd_compare(args):
    cfg = _load_cfg(args, require=("network", "train", "query", "database"))
    dtype = _DTYPES[cfg.precision]
    ds_train = ingest(cfg.data["train"])
    ds_query = ingest(cfg.data["query"])
    ds_db = ingest(cfg.data["database"])
    _snapshot(cfg, cfg.out)
    if args.axis == "head":
        variants = [("slice", {}), ("matrix", {})]
    else:
        variants = [("shared", {"sharing": "shared"}), ("query-independent", {"sharing": "query-independent"})]
    rule = metrics.RelevanceRule(cfg.metrics.relevance)
    rows = []
    for vname, overrides in variants:
        for b in cfg.bits:
            vcfg = cfg
            if args.axis == "head":
                vcfg = _replace_head(cfg, vname)
                tcfg = cfg.train
            else:
                tcfg = TrainConfig(**{**_train_asdict(cfg.train), **overrides})
            tag = f"{args.axis}-{vname}-q{b}"
            _, state, model = _train_one(vcfg, b, tcfg, ds_train, dtype, cfg.out, tag)
            _, qbits = _encode_dataset(state, model, tcfg, ds_query, "query", dtype)
            _, dbits = _encode_dataset(state, model, tcfg, ds_db, "database", dtype)
            queries = index.CodeDatabase.from_bits(qbits, labels=ds_query.labels)
            db = index.CodeDatabase.from_bits(dbits, labels=ds_db.labels)
            report = metrics.evaluate(
                queries, db, rule,
                truncate=cfg.metrics.truncate or None,
                ks=list(cfg.metrics.topk) or None,
                radius=cfg.metrics.radius,
                denominator=cfg.metrics.ap_denominator,
                empty=cfg.metrics.empty_retrieval,
            )
            rows.append((vname, b, report.map, report.precision_at_radius2))
    table_path = os.path.join(cfg.out, f"compare-{args.axis}.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("variant,bits,map,precision_at_radius2\n")
        for vname, b, m, p2 in rows:
            fh.write(f"{vname},{b},{m!r},{p2!r}\n")
    width = max(len(r[0]) for r in rows)
    print(f"{'variant':<{width}}  bits  map       p@radius")
    for vname, b, m, p2 in rows:
        print(f"{vname:<{width}}  {b:<4}  {m:.6f}  {p2:.6f}")
    print(f"table -> {table_path}")
    return 0


def _replace_head(cfg, mode):
    import copy

    out = copy.copy(cfg)
    out.head_mode = mode
    return out


def cmd_synth(args):
    seed = args.seed if args.seed is not None else 0
    try:
        shape = tuple(int(p) for p in args.shape.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--shape must look like 3x8x8, got {args.shape!r}")
    sizes = {"train": args.train, "query": args.query, "database": args.database}
    splits = synth_splits(args.classes, sizes, shape, args.separation, seed,
                          noise=args.noise, brightness=args.brightness)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    for name, ds in splits.items():
        path = os.path.join(out, f"{name}.hlt")
        export_raw(ds, path)
        print(f"{name}: {len(ds)} items -> {path}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"hashlab: config error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"hashlab: numeric failure: {e}", file=sys.stderr)
        return 3
    except (FormatError, DomainError, ShapeError, LengthMismatch, InfeasibleError, UndefinedError) as e:
        print(f"hashlab: data error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"hashlab: i/o error: {e}", file=sys.stderr)
        return 2
    except HashlabError as e:
        print(f"hashlab: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
