"""Command-line entry point ``triplet-nn``.

Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
unreadable or malformed data.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import baselines, bench, theory
from .comptree import CompTree, build_comptree, leaf_candidates, nn_search, tree_stats
from .loaders import FORMATS, load_dataset, save_vectors
from .metrics import DataError, Query, TripletOracle, metric_for

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _emit(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def _data_args(p):
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--format", choices=sorted(FORMATS), default="csv")
    p.add_argument("--header", action="store_true", help="skip the first CSV line")


def _load(args):
    return load_dataset(args.data, args.format, args.header)


# ---------------------------------------------------------------- bench


def cmd_bench_run(args):
    cfg = bench.load_config(args.config)
    if args.out:
        cfg.output = args.out
    if args.parallel:
        cfg.parallel = True
    if args.workers is not None:
        cfg.workers = args.workers
    rows = bench.run_benchmark(cfg)
    print(f"wrote {len(rows)} rows to {cfg.output}")


def cmd_bench_gen(args):
    S = bench.generate_synthetic(args.kind, args.n, args.dim, args.seed)
    save_vectors(args.out, S.points)


# ---------------------------------------------------------------- tree


def _load_tree(path, S):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read tree {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON tree record") from exc
    try:
        if d.get("method") in baselines.METHODS:
            tree = baselines.AxisSplitTree.from_dict(d, S.points if S is not None else None)
        else:
            tree = CompTree.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if S is not None:
        if tree.n != S.n:
            raise DataError(f"tree was built on {tree.n} points, dataset has {S.n}")
        fp = getattr(tree, "dataset_fingerprint", None)
        if fp and fp != S.fingerprint():
            raise DataError("dataset does not match the one the tree was built on")
    return tree


def cmd_tree_build(args):
    S = _load(args)
    if args.method == "comptree":
        tree = build_comptree(S, args.n0, args.seed, TripletOracle(metric_for(S)))
    else:
        if S.kind != "dense-vector":
            raise ValueError(f"{args.method} needs --format csv")
        tree = baselines.build_baseline(args.method, S.points, args.n0, args.seed)
    tree.save(args.out)
    _emit({"method": args.method, "n": S.n, "height": int(tree.height), "nodes": int(tree.n_nodes)})


def cmd_tree_stats(args):
    st = tree_stats(_load_tree(args.tree, None))
    out = st._asdict()
    out["leaf_sizes"] = {str(k): v for k, v in st.leaf_sizes.items()}
    _emit(out)


def _parse_query(args, S):
    if (args.query is None) == (args.query_id is None):
        raise ValueError("give exactly one of --query and --query-id")
    if args.query_id is not None:
        if not 0 <= args.query_id < S.n:
            raise ValueError(f"--query-id must lie in [0, {S.n})")
        return Query.point(args.query_id)
    parts = [p.strip() for p in args.query.split(",")]
    if args.format == "csv":
        try:
            return Query.external(np.array([float(p) for p in parts]))
        except ValueError:
            raise ValueError("--query must be comma-separated numbers") from None
    if args.format == "categorical":
        return Query.external(tuple(parts))
    try:
        return Query.external(int(args.query))
    except ValueError:
        raise ValueError("--query must be a node id") from None


def cmd_tree_search(args):
    S = _load(args)
    tree = _load_tree(args.tree, S)
    q = _parse_query(args, S)
    metric = metric_for(S)
    if isinstance(tree, baselines.AxisSplitTree):
        nb, d, depth = baselines.defeatist_query(tree, q)
        _emit({"neighbor": nb, "distance": d, "leaf_depth": depth})
        return
    oracle = TripletOracle(metric)
    rep = nn_search(tree, q, oracle)
    out = {
        "neighbor": rep.neighbor,
        "distance": metric.dist(q, rep.neighbor),
        "triplets_used": rep.triplets_used,
        "leaf_depth": rep.leaf_depth,
        "leaf_size": rep.leaf_size,
        "fallback": rep.fallback,
    }
    if args.k > 1:
        out["candidates"] = leaf_candidates(tree, q, TripletOracle(metric), args.k)
    _emit(out)


# ---------------------------------------------------------------- theory


def cmd_theory_bounds(args):
    rep = theory.bound_report(args.n, args.n0, args.c_tilde, args.epsilon, args.C, args.alpha)
    _emit(rep.to_dict())


def cmd_theory_expansion(args):
    S = _load(args)
    prof = theory.empirical_expansion_rate(S, metric_for(S), max_sample=args.sample_size, seed=args.seed)
    if args.csv:
        prof.to_csv(args.csv)
    _emit(prof.summary())


def cmd_theory_lemma1(args):
    S = _load(args)
    metric = metric_for(S)
    c = theory.empirical_expansion_rate(S, metric, max_sample=args.sample_size, seed=args.seed).dataset_max
    ids = np.arange(S.n)
    out = []
    for delta in args.delta:
        frac = theory.split_balance_trial(ids, metric, delta, args.trials, args.seed)
        bound = theory.unbalanced_split_bound(c, delta)
        p = min(1.0, bound)
        allowance = 3.0 * (p * (1.0 - p) / args.trials) ** 0.5
        out.append(
            {
                "delta": delta,
                "c_tilde": c,
                "fraction": frac,
                "bound": bound,
                "allowance": allowance,
                "holds": frac <= bound + allowance,
            }
        )
    _emit(out)


# ---------------------------------------------------------------- wiring


def build_parser():
    ap = argparse.ArgumentParser(prog="triplet-nn", description="Comparison-based nearest-neighbor search")
    top = ap.add_subparsers(dest="group", required=True)

    g = top.add_parser("bench", help="benchmarks and synthetic data").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("run", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the output path")
    p.add_argument("--parallel", action="store_true", help="answer queries in threads")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench_run)
    p = g.add_parser("gen", help="write a synthetic dense dataset as CSV")
    p.add_argument("--kind", required=True, choices=bench.KINDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_gen)

    g = top.add_parser("tree", help="build, inspect and query trees").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("build")
    _data_args(p)
    p.add_argument("--method", choices=("comptree",) + baselines.METHODS, default="comptree")
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tree_build)
    p = g.add_parser("stats")
    p.add_argument("--tree", required=True)
    p.set_defaults(func=cmd_tree_stats)
    p = g.add_parser("search")
    _data_args(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--query", help="point coordinates, tokens, or a node id")
    p.add_argument("--query-id", type=int, help="in-sample query (leave-one-out)")
    p.add_argument("-k", type=int, default=1, help="also list the k closest leaf members")
    p.set_defaults(func=cmd_tree_search)

    g = top.add_parser("theory", help="bounds and expansion estimates").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("bounds")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--c-tilde", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--C", type=float)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_theory_bounds)
    p = g.add_parser("expansion")
    _data_args(p)
    p.add_argument("--sample-size", type=int, default=theory.MAX_EXPANSION_SAMPLE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the (point_id, c_tilde) profile here")
    p.set_defaults(func=cmd_theory_expansion)
    p = g.add_parser("lemma1")
    _data_args(p)
    p.add_argument("--delta", type=float, nargs="+", default=[0.005, 0.01, 0.02])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--sample-size", type=int, default=theory.MAX_EXPANSION_SAMPLE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory_lemma1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
