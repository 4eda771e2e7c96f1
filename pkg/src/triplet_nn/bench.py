"""Evaluation protocols, synthetic data and the benchmark runner.

Two protocols are supported. *Leave-one-out* builds one index over all of
``S`` and queries every point, skipping the query itself only when the leaf
is scanned. *Holdout* moves a seeded sample of points out of the index and
queries them. A query is a hit when the returned point is at the true
nearest-neighbor distance, so any member of a tied minimizer set counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import baselines
from .comptree import build_comptree, nn_search
from .loaders import FORMATS, load_dataset
from .metrics import (
    DENSE,
    DataError,
    Dataset,
    Query,
    TripletOracle,
    VectorDataset,
    metric_for,
    nearest_all,
)

SCHEMA = "triplet-nn bench v1"
METHODS = ("comptree", "kdtree", "rptree", "patree", "brute")
MODES = ("leave-one-out", "holdout")
KINDS = ("uniform-cube", "gaussian-mixture", "line-grid", "grid-2d")

MIXTURE_COMPONENTS = 5


class ConfigError(ValueError):
    """Invalid benchmark configuration."""


# ----------------------------------------------------------------------------
# synthetic data


def generate_synthetic(kind: str, n: int, dim: int, seed: int) -> VectorDataset:
    """Reproducible synthetic point sets.

    ``line-grid`` is ``0..n-1`` on a line and ``grid-2d`` the first ``n``
    points of a row-major integer square grid; both ignore ``dim``.
    ``gaussian-mixture`` draws from five equal-weight unit-variance spherical
    Gaussians centred at ``k * e1`` for ``k = 0..4``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    if int(n) < 1 or int(dim) < 1:
        raise ValueError("n and dim must be at least 1")
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    n, dim = int(n), int(dim)
    rng = np.random.default_rng(int(seed))
    if kind == "uniform-cube":
        X = rng.random((n, dim))
    elif kind == "gaussian-mixture":
        comp = rng.integers(MIXTURE_COMPONENTS, size=n)
        X = rng.standard_normal((n, dim))
        X[:, 0] += comp
    elif kind == "line-grid":
        X = np.arange(n, dtype=np.float64)[:, None]
    else:
        side = math.isqrt(n - 1) + 1
        k = np.arange(n)
        X = np.column_stack([k // side, k % side]).astype(np.float64)
    return VectorDataset(X)


# ----------------------------------------------------------------------------
# indexes


class _Index:
    """One built index behind a uniform ``search`` call."""

    def __init__(self, method, S: Dataset, n0: int, seed: int):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method in baselines.METHODS and S.kind != DENSE:
            raise ValueError(f"{method} needs a {DENSE} dataset, got {S.kind}")
        self.method = method
        self.S = S
        self.metric = metric_for(S)
        self.oracle = None
        self.tree = None
        self.build_triplets = None
        self.height = None
        t0 = time.perf_counter()
        if method == "comptree":
            self.oracle = TripletOracle(self.metric)
            self.tree = build_comptree(S, n0, seed, self.oracle)
            self.build_triplets = self.tree.build_triplets
            self.height = self.tree.height
        elif method != "brute":
            self.tree = baselines.build_baseline(method, S.points, n0, seed)
            self.height = self.tree.height
        self.build_time = time.perf_counter() - t0

    def search(self, q: Query):
        """Return ``(neighbor, triplets)``; triplets is ``None`` for coordinate methods."""
        if self.method == "comptree":
            r = nn_search(self.tree, q, self.oracle)
            return r.neighbor, r.triplets_used
        if self.method == "brute":
            return None, None  # filled from the exact answers
        nb, _, _ = baselines.defeatist_query(self.tree, q)
        return nb, None


@dataclass
class QueryRecord:
    query: int  # point id for leave-one-out, test position for holdout
    neighbor: int
    distance: float
    nn_distance: float
    hit: bool
    same_id: bool  # returned the smallest-id exact neighbor
    triplets: int | None


@dataclass
class Evaluation:
    records: list[QueryRecord]
    build_triplets: int | None
    tree_height: int | None
    build_time: float
    query_time: float

    @property
    def miss_probability(self) -> float:
        return sum(not r.hit for r in self.records) / len(self.records)

    @property
    def strict_miss_probability(self) -> float:
        """Miss rate when only the smallest-id minimizer counts as a hit."""
        return sum(not r.same_id for r in self.records) / len(self.records)

    def relative_distance_error(self):
        """``(mean of d_alg / d_NN - 1, excluded)``; the mean is ``None`` if all are excluded."""
        vals = [r.distance / r.nn_distance - 1.0 for r in self.records if r.nn_distance > 0.0]
        excluded = len(self.records) - len(vals)
        return (math.fsum(vals) / len(vals) if vals else None), excluded

    def query_triplets(self):
        t = [r.triplets for r in self.records]
        return None if not t or t[0] is None else np.asarray(t, dtype=np.int64)


def _chunks(n, workers):
    k = max(1, workers)
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def evaluate(method: str, S: Dataset, queries, n0: int, seed: int = 0, workers: int = 1) -> Evaluation:
    """Build ``method`` over ``S`` and answer every query.

    ``queries`` is a list of :class:`Query`. In-sample queries follow the
    leave-one-out convention. With ``workers > 1`` queries are answered in
    threads against the shared index; the results do not depend on it.
    """
    queries = list(queries)
    if not queries:
        raise ValueError("no queries")
    index = _Index(method, S, n0, seed)
    metric = index.metric
    exact_idx, exact_dist = nearest_all(metric, queries)
    if np.any(exact_idx < 0):
        raise ValueError("dataset too small: a query has no candidate")

    def run(span):
        a, b = span
        out = []
        for i in range(a, b):
            nb, used = index.search(queries[i])
            out.append((nb, used))
        return out

    t0 = time.perf_counter()
    spans = _chunks(len(queries), workers)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    query_time = time.perf_counter() - t0
    answers = [x for p in parts for x in p]

    if index.oracle is not None:
        spent = sum(u for _, u in answers)
        if index.oracle.count != index.build_triplets + spent:
            raise RuntimeError("triplet counts do not reconcile with the oracle")

    records = []
    for i, (q, (nb, used)) in enumerate(zip(queries, answers)):
        if nb is None:
            nb = int(exact_idx[i])
            d = float(exact_dist[i])
        else:
            d = float(metric.dists(q, np.array([nb], dtype=np.int64))[0])
        dnn = float(exact_dist[i])
        records.append(
            QueryRecord(
                query=q.point_id if q.in_sample else i,
                neighbor=int(nb),
                distance=d,
                nn_distance=dnn,
                hit=d == dnn,
                same_id=int(nb) == int(exact_idx[i]),
                triplets=used,
            )
        )
    return Evaluation(records, index.build_triplets, index.height, index.build_time, query_time)


def leave_one_out_error(method: str, S: Dataset, n0: int, seed: int = 0, query_ids=None, workers: int = 1):
    """``(miss_probability, records)`` with every point (or ``query_ids``) as a query."""
    if S.n < 2:
        raise ValueError("leave-one-out needs at least two points")
    ids = range(S.n) if query_ids is None else [int(i) for i in query_ids]
    ev = evaluate(method, S, [Query.point(i) for i in ids], n0, seed, workers)
    return ev.miss_probability, ev.records


def relative_distance_error(method: str, S: Dataset, queries, n0: int, seed: int = 0, workers: int = 1):
    """``(mean_rde, excluded_count)``; queries at distance 0 from ``S`` are excluded."""
    qs = [q if isinstance(q, Query) else Query.external(q) for q in queries]
    mean, excluded = evaluate(method, S, qs, n0, seed, workers).relative_distance_error()
    if mean is None:
        raise ValueError("every query coincides with an indexed point")
    return mean, excluded


def holdout_split(n: int, size: int, seed: int):
    """Seeded ``(train_ids, test_ids)``, both ascending."""
    if not 1 <= size < n:
        raise ValueError(f"holdout_size must lie in [1, n) with n={n}")
    test = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))
    keep = np.ones(n, dtype=bool)
    keep[test] = False
    return np.flatnonzero(keep), test


# ----------------------------------------------------------------------------
# configuration


@dataclass
class BenchConfig:
    dataset: str
    format: str = "csv"
    header: bool = False
    name: str | None = None
    methods: tuple[str, ...] = ("comptree",)
    n0: tuple[int, ...] = (16,)
    seeds: tuple[int, ...] = (0,)
    mode: str = "leave-one-out"
    holdout_size: int = 1000
    max_queries: int | None = None
    output: str = "results.csv"
    parallel: bool = False
    workers: int = 4

    @property
    def dataset_name(self) -> str:
        return self.name or os.path.splitext(os.path.basename(self.dataset))[0]

    def validate(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
            if m in baselines.METHODS and FORMATS[self.format] != DENSE:
                raise ConfigError(f"method {m} needs dense vectors, not {self.format} data")
        if not self.n0 or any(v < 1 for v in self.n0):
            raise ConfigError("n0 values must be at least 1")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ConfigError("at least one non-negative seed is required")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.holdout_size < 1:
            raise ConfigError("holdout_size must be at least 1")
        if self.max_queries is not None and self.max_queries < 1:
            raise ConfigError("max_queries must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self


def _bool(key, v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {v!r}")


def _int(key, v):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _int_list(key, v):
    out = []
    for part in v.replace(",", " ").split():
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            lo, hi = _int(key, lo), _int(key, hi)
            if hi < lo:
                raise ConfigError(f"{key}: empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(_int(key, part))
    return tuple(out)


_METRIC_FORMAT = {"euclidean": "csv", "mismatch": "categorical", "shortest-path": "edgelist"}


def parse_config(text: str, base_dir: str = ".") -> BenchConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Relative ``dataset`` and ``output`` paths resolve against ``base_dir``.
    """
    kw = {}
    metric = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in kw or (key == "metric" and metric is not None):
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in ("dataset", "output", "name"):
            kw[key] = value
        elif key in ("format", "mode"):
            kw[key] = value.lower()
        elif key == "metric":
            metric = value.lower()
            if metric not in _METRIC_FORMAT:
                raise ConfigError(f"line {lineno}: unknown metric {value!r}")
        elif key in ("header", "parallel"):
            kw[key] = _bool(key, value)
        elif key in ("holdout_size", "workers", "max_queries"):
            kw[key] = _int(key, value)
        elif key in ("n0", "seeds"):
            kw[key] = _int_list(key, value)
        elif key in ("methods", "method"):
            kw["methods"] = tuple(m.strip().lower() for m in value.replace(",", " ").split())
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if "dataset" not in kw:
        raise ConfigError("missing required key 'dataset'")
    if metric is not None:
        fmt = kw.setdefault("format", _METRIC_FORMAT[metric])
        if _METRIC_FORMAT[metric] != fmt:
            raise ConfigError(f"metric {metric} does not apply to {fmt} data")
    for key in ("dataset", "output"):
        if key in kw and not os.path.isabs(kw[key]):
            kw[key] = os.path.join(base_dir, kw[key])
    if "output" not in kw:
        kw["output"] = os.path.join(base_dir, "results.csv")
    return BenchConfig(**kw).validate()


def load_config(path) -> BenchConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


# ----------------------------------------------------------------------------
# rows and output


@dataclass
class BenchRow:
    dataset: str
    method: str
    n0: int
    seed: int
    mode: str
    n_queries: int
    miss_probability: float | None
    relative_distance_error: float | None
    excluded_zero_distance_queries: int
    build_triplets: int | None
    mean_query_triplets: float | None
    max_query_triplets: int | None
    tree_height: int | None
    budget_ok: bool | None
    wall_time_build: float = field(metadata={"volatile": True})
    wall_time_query: float = field(metadata={"volatile": True})


COLUMNS = tuple(f.name for f in fields(BenchRow))
VOLATILE = tuple(f.name for f in fields(BenchRow) if f.metadata.get("volatile"))
_TYPES = {f.name: f.type for f in fields(BenchRow)}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name, s):
    if s == "":
        return None
    t = _TYPES[name]
    if t.startswith("bool"):
        return s == "true"
    if t.startswith("int"):
        return int(s)
    if t.startswith("float"):
        return float(s)
    return s


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[BenchRow]:
    lines = text.splitlines()
    if not lines or lines[0] != f"# {SCHEMA}":
        raise DataError(f"missing '# {SCHEMA}' header line")
    reader = csv.reader(lines[1:])
    head = next(reader, None)
    if tuple(head or ()) != COLUMNS:
        raise DataError("unexpected column layout")
    return [BenchRow(**{c: _parse(c, v) for c, v in zip(COLUMNS, rec)}) for rec in reader]


def rows_to_json(rows) -> str:
    return json.dumps({"schema": SCHEMA, "rows": [asdict(r) for r in rows]}, indent=1) + "\n"


def read_rows(path) -> list[BenchRow]:
    with open(path, newline="") as fh:
        return rows_from_csv(fh.read())


def strip_volatile(text: str) -> str:
    """The CSV text without wall-time columns, for reproducibility checks."""
    lines = text.splitlines()
    keep = [i for i, c in enumerate(COLUMNS) if c not in VOLATILE]
    out = [lines[0]]
    for rec in csv.reader(lines[1:]):
        out.append(",".join(rec[i] for i in keep))
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# runner


def _row(cfg, method, n0, seed, n_index, ev: Evaluation) -> BenchRow:
    rde, excluded = ev.relative_distance_error()
    trip = ev.query_triplets()
    mean_t = max_t = None
    ok = None
    if trip is not None:
        mean_t, max_t = float(trip.mean()), int(trip.max())
    if method == "comptree":
        ok = bool(max_t <= ev.tree_height + n0 - 1 and ev.build_triplets <= n_index * ev.tree_height)
    return BenchRow(
        dataset=cfg.dataset_name,
        method=method,
        n0=n0,
        seed=seed,
        mode=cfg.mode,
        n_queries=len(ev.records),
        miss_probability=ev.miss_probability,
        relative_distance_error=rde,
        excluded_zero_distance_queries=excluded,
        build_triplets=ev.build_triplets,
        mean_query_triplets=mean_t,
        max_query_triplets=max_t,
        tree_height=ev.tree_height,
        budget_ok=ok,
        wall_time_build=ev.build_time,
        wall_time_query=ev.query_time,
    )


def _queries_for(cfg, S, seed):
    """Index set and queries for one seed."""
    if cfg.mode == "holdout":
        train, test = holdout_split(S.n, cfg.holdout_size, seed)
        index = S.subset(train)
        queries = [Query.external(S.payload(int(t))) for t in test]
        return index, queries
    if S.n < 2:
        raise ValueError("leave-one-out needs at least two points")
    ids = np.arange(S.n)
    if cfg.max_queries is not None and cfg.max_queries < S.n:
        ids = np.sort(np.random.default_rng([seed, 1]).choice(S.n, size=cfg.max_queries, replace=False))
    return S, [Query.point(int(i)) for i in ids]


def run_benchmark(cfg: BenchConfig, dataset: Dataset | None = None, write: bool = True) -> list[BenchRow]:
    """Evaluate every (method, n0, seed) and write CSV plus a JSON mirror.

    Rows come out in config order of methods, then n0, then seeds. The
    parallel flag answers queries in ``cfg.workers`` threads.
    """
    cfg.validate()
    S = dataset if dataset is not None else load_dataset(cfg.dataset, cfg.format, cfg.header)
    if cfg.mode == "holdout" and not cfg.holdout_size < S.n:
        raise ConfigError(f"holdout_size {cfg.holdout_size} must be below n={S.n}")
    workers = cfg.workers if cfg.parallel else 1
    rows = []
    splits = {seed: _queries_for(cfg, S, seed) for seed in cfg.seeds}
    for method in cfg.methods:
        for n0 in cfg.n0:
            for seed in cfg.seeds:
                index, queries = splits[seed]
                ev = evaluate(method, index, queries, n0, seed, workers)
                rows.append(_row(cfg, method, n0, seed, index.n, ev))
    if write:
        write_rows(rows, cfg.output)
    return rows


def write_rows(rows, path) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        fh.write(rows_to_json(rows))
