"""Datasets, metrics, the counted triplet oracle and exact nearest neighbors.

Three dataset kinds are supported, each with its own distance rule:

========================  ==================================
kind                      distance
========================  ==================================
``dense-vector``          Euclidean
``categorical-tuple``     number of differing coordinates
``graph-node``            shortest-path length
========================  ==================================

Index structures never read distances directly. They go through a
:class:`TripletOracle`, which answers ``d(x, y) <= d(x, z)`` and counts
every answer. A metric can be *sealed*, after which any distance read that
does not come from an oracle raises :class:`OraclePurityError`.
"""

from __future__ import annotations

import enum
import hashlib
import threading
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from . import kernels

DENSE = "dense-vector"
CATEGORICAL = "categorical-tuple"
GRAPH = "graph-node"
KINDS = (DENSE, CATEGORICAL, GRAPH)

#: graphs up to this many nodes keep every Dijkstra row they compute
DEFAULT_ROW_CACHE_NODES = 20_000
_LRU_ROWS = 256


class DataError(ValueError):
    """Input data is malformed or violates a dataset invariant."""


class OraclePurityError(RuntimeError):
    """A sealed metric was read outside of a triplet oracle."""


_access = threading.local()


@contextmanager
def _oracle_access():
    _access.depth = getattr(_access, "depth", 0) + 1
    try:
        yield
    finally:
        _access.depth -= 1


@dataclass(frozen=True)
class Query:
    """A search query: a stored point (leave-one-out) or an external payload."""

    point_id: int | None = None
    payload: object = None

    @classmethod
    def point(cls, point_id: int) -> "Query":
        return cls(point_id=int(point_id))

    @classmethod
    def external(cls, payload) -> "Query":
        return cls(payload=payload)

    @property
    def in_sample(self) -> bool:
        return self.point_id is not None


# ----------------------------------------------------------------------------
# datasets


class Dataset:
    """An indexed finite point set. Point ids are ``0 .. n-1``."""

    kind: str

    def __len__(self) -> int:
        return self.n

    @property
    def n(self) -> int:
        raise NotImplementedError

    def payload(self, i: int):
        raise NotImplementedError

    def subset(self, ids) -> "Dataset":
        """Dataset made of the points ``ids`` (renumbered in the given order)."""
        raise NotImplementedError

    def _fingerprint_parts(self):
        raise NotImplementedError

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.kind.encode())
        for part in self._fingerprint_parts():
            h.update(np.ascontiguousarray(part).tobytes())
        return h.hexdigest()


class VectorDataset(Dataset):
    kind = DENSE

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64, order="C", copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"expected a non-empty (n, dim) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("vector coordinates must be finite")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def payload(self, i):
        return self.points[i]

    def subset(self, ids):
        return VectorDataset(self.points[np.asarray(ids, dtype=np.int64)])

    def _fingerprint_parts(self):
        return [np.array(self.points.shape), self.points]


class CategoricalDataset(Dataset):
    """Tuples of string tokens; tokens are encoded per column as integers."""

    kind = CATEGORICAL

    def __init__(self, rows, *, _codes=None, _vocab=None):
        if _codes is not None:
            self.codes, self.vocab = _codes, _vocab
            return
        rows = [tuple(str(t) for t in r) for r in rows]
        if not rows:
            raise DataError("categorical dataset is empty")
        arity = len(rows[0])
        if arity < 1:
            raise DataError("categorical rows need at least one attribute")
        for i, r in enumerate(rows):
            if len(r) != arity:
                raise DataError(f"row {i + 1}: expected {arity} attributes, got {len(r)}")
        vocab = [dict() for _ in range(arity)]
        codes = np.empty((len(rows), arity), dtype=np.int32)
        for i, r in enumerate(rows):
            for k, tok in enumerate(r):
                codes[i, k] = vocab[k].setdefault(tok, len(vocab[k]))
        codes.setflags(write=False)
        self.codes = codes
        self.vocab = vocab

    @property
    def n(self):
        return self.codes.shape[0]

    @property
    def dim(self):
        return self.codes.shape[1]

    def payload(self, i):
        inverse = self.__dict__.get("_inverse")
        if inverse is None:
            inverse = self._inverse = [list(v) for v in self.vocab]
        return tuple(inverse[k][c] for k, c in enumerate(self.codes[i]))

    def encode(self, payload) -> np.ndarray:
        toks = tuple(str(t) for t in payload)
        if len(toks) != self.dim:
            raise ValueError(f"arity mismatch: expected {self.dim} attributes, got {len(toks)}")
        return np.array([self.vocab[k].get(t, -1) for k, t in enumerate(toks)], dtype=np.int32)

    def subset(self, ids):
        codes = self.codes[np.asarray(ids, dtype=np.int64)]
        codes.setflags(write=False)
        return CategoricalDataset(None, _codes=codes, _vocab=self.vocab)

    def _fingerprint_parts(self):
        return [np.array(self.codes.shape), self.codes]


class _RowCache:
    def __init__(self, graph, limit):
        self.graph = graph
        self.unbounded = graph.shape[0] <= limit
        self.rows = OrderedDict() if not self.unbounded else {}
        self.lock = threading.Lock()

    def get(self, node):
        row = self.rows.get(node)
        if row is not None:
            return row
        row = dijkstra(self.graph, directed=True, indices=node)
        row.setflags(write=False)
        with self.lock:
            self.rows[node] = row
            if not self.unbounded:
                while len(self.rows) > _LRU_ROWS:
                    self.rows.popitem(last=False)
        return row


class GraphDataset(Dataset):
    """Nodes of a connected, positively weighted, undirected graph.

    ``nodes`` selects which graph nodes are the dataset's points; the graph
    itself (and so every distance) is shared between subsets.
    """

    kind = GRAPH

    def __init__(self, adjacency, labels=None, nodes=None, *, row_cache_nodes=DEFAULT_ROW_CACHE_NODES, _cache=None):
        adj = sp.csr_matrix(adjacency, dtype=np.float64)
        n_nodes = adj.shape[0]
        if adj.shape != (n_nodes, n_nodes) or n_nodes < 1:
            raise DataError("adjacency must be a non-empty square matrix")
        if adj.nnz and np.any(adj.data <= 0):
            raise DataError("edge weights must be strictly positive")
        if _cache is None:
            if (adj != adj.T).nnz:
                raise DataError("adjacency must be symmetric")
            ncomp, _ = connected_components(adj, directed=False)
            if ncomp != 1:
                raise DataError(f"graph must be connected, found {ncomp} components")
        self.adjacency = adj
        self.labels = np.arange(n_nodes, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
        self._label_index = {int(lab): i for i, lab in enumerate(self.labels)}
        self.nodes = np.arange(n_nodes, dtype=np.int64) if nodes is None else np.asarray(nodes, dtype=np.int64)
        if self.nodes.size < 1:
            raise DataError("graph dataset needs at least one point")
        self._cache = _cache if _cache is not None else _RowCache(adj, row_cache_nodes)

    @classmethod
    def from_edges(cls, edges, **kw) -> "GraphDataset":
        """Build from ``(u, v, w)`` triples; labels are the distinct node ids."""
        us, vs, ws = [], [], []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = abs(float(e[2])) if len(e) > 2 else 1.0
            us.append(u)
            vs.append(v)
            ws.append(w)
        labels = np.unique(np.array(us + vs, dtype=np.int64))
        pos = {int(lab): i for i, lab in enumerate(labels)}
        adj = _symmetric_adjacency([pos[u] for u in us], [pos[v] for v in vs], ws, len(labels))
        return cls(adj, labels, **kw)

    @property
    def n(self):
        return self.nodes.size

    def payload(self, i):
        return int(self.labels[self.nodes[i]])

    def node_index(self, label) -> int:
        try:
            return self._label_index[int(label)]
        except (KeyError, TypeError, ValueError):
            raise KeyError(f"unknown graph node {label!r}") from None

    def row(self, node: int) -> np.ndarray:
        """Shortest-path distances from graph node index ``node`` to every node."""
        return self._cache.get(int(node))

    def subset(self, ids):
        return GraphDataset(
            self.adjacency, self.labels, self.nodes[np.asarray(ids, dtype=np.int64)], _cache=self._cache
        )

    def _fingerprint_parts(self):
        a = self.adjacency
        return [self.labels, self.nodes, a.indptr, a.indices, a.data]


def _symmetric_adjacency(rows, cols, weights, n):
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    keep = r != c
    r, c, w = r[keep], c[keep], w[keep]
    rr = np.concatenate([r, c])
    cc = np.concatenate([c, r])
    ww = np.concatenate([w, w])
    # parallel edges: the lightest one wins
    order = np.lexsort((ww, cc, rr))
    rr, cc, ww = rr[order], cc[order], ww[order]
    first = np.ones(rr.size, dtype=bool)
    first[1:] = (rr[1:] != rr[:-1]) | (cc[1:] != cc[:-1])
    return sp.csr_matrix((ww[first], (rr[first], cc[first])), shape=(n, n))


# ----------------------------------------------------------------------------
# metrics


class Metric:
    """Distance evaluator bound to one dataset.

    ``distance`` works on payloads. ``dists`` and ``dist`` work on point
    references: an integer point id or a :class:`Query`.
    """

    kind: str

    def __init__(self, dataset: Dataset):
        if dataset.kind != self.kind:
            raise ValueError(f"{type(self).__name__} needs a {self.kind} dataset, got {dataset.kind}")
        self.dataset = dataset
        self._sealed = False

    @contextmanager
    def sealed(self):
        """Reject every distance read that does not go through an oracle."""
        prev, self._sealed = self._sealed, True
        try:
            yield self
        finally:
            self._sealed = prev

    def _guard(self):
        if self._sealed and not getattr(_access, "depth", 0):
            raise OraclePurityError("raw distance read on a sealed metric")

    def _check_id(self, i):
        if not 0 <= i < self.dataset.n:
            raise IndexError(f"point id {i} out of range for n={self.dataset.n}")

    def distance(self, x, y) -> float:
        """Distance between two payloads of this metric's kind."""
        raise NotImplementedError

    def dists(self, ref, ids) -> np.ndarray:
        """Distances from ``ref`` to the points ``ids``."""
        self._guard()
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.dataset.n):
            raise IndexError("point id out of range")
        return self._dists(ref, ids)

    def dist(self, a, b) -> float:
        """Distance between two references; either may be a Query."""
        if isinstance(b, Query) and b.in_sample:
            b = b.point_id
        if isinstance(b, Query):
            if isinstance(a, Query) and not a.in_sample:
                self._guard()
                return self.distance(a.payload, b.payload)
            a, b = b, (a.point_id if isinstance(a, Query) else a)
        return float(self.dists(a, [int(b)])[0])

    def _payload_of(self, ref):
        if isinstance(ref, Query):
            return self.dataset.payload(ref.point_id) if ref.in_sample else ref.payload
        self._check_id(int(ref))
        return self.dataset.payload(int(ref))

    def _dists(self, ref, ids):
        raise NotImplementedError


class EuclideanMetric(Metric):
    kind = DENSE

    def _vec(self, ref):
        if isinstance(ref, Query):
            if ref.in_sample:
                self._check_id(ref.point_id)
                return self.dataset.points[ref.point_id]
            return self._as_vec(ref.payload)
        self._check_id(int(ref))
        return self.dataset.points[int(ref)]

    def _as_vec(self, payload):
        v = np.ascontiguousarray(payload, dtype=np.float64).reshape(-1)
        if v.size != self.dataset.dim:
            raise ValueError(f"arity mismatch: expected {self.dataset.dim} coordinates, got {v.size}")
        return v

    def distance(self, x, y):
        self._guard()
        xv, yv = self._as_vec(x), self._as_vec(y)
        return float(kernels.euclid_dists(xv[None, :], np.zeros(1, dtype=np.int64), yv)[0])

    def _dists(self, ref, ids):
        return kernels.euclid_dists(self.dataset.points, ids, self._vec(ref))


class MismatchMetric(Metric):
    kind = CATEGORICAL

    def _codes(self, ref):
        if isinstance(ref, Query):
            if ref.in_sample:
                self._check_id(ref.point_id)
                return self.dataset.codes[ref.point_id]
            return self.dataset.encode(ref.payload)
        self._check_id(int(ref))
        return self.dataset.codes[int(ref)]

    def distance(self, x, y):
        self._guard()
        x, y = tuple(str(t) for t in x), tuple(str(t) for t in y)
        if len(x) != len(y):
            raise ValueError(f"arity mismatch: {len(x)} vs {len(y)} attributes")
        return float(sum(a != b for a, b in zip(x, y)))

    def _dists(self, ref, ids):
        return kernels.hamming_dists(self.dataset.codes, ids, np.ascontiguousarray(self._codes(ref)))


class ShortestPathMetric(Metric):
    kind = GRAPH

    def _source(self, ref):
        ds = self.dataset
        if isinstance(ref, Query):
            if ref.in_sample:
                self._check_id(ref.point_id)
                return int(ds.nodes[ref.point_id])
            return ds.node_index(ref.payload)
        self._check_id(int(ref))
        return int(ds.nodes[int(ref)])

    def distance(self, x, y):
        self._guard()
        ds = self.dataset
        return float(ds.row(ds.node_index(x))[ds.node_index(y)])

    def _dists(self, ref, ids):
        ds = self.dataset
        return ds.row(self._source(ref))[ds.nodes[ids]]


_METRICS = {DENSE: EuclideanMetric, CATEGORICAL: MismatchMetric, GRAPH: ShortestPathMetric}


def metric_for(dataset: Dataset) -> Metric:
    """The kind-matched metric for ``dataset``."""
    return _METRICS[dataset.kind](dataset)


def distance(metric: Metric, x, y) -> float:
    return metric.distance(x, y)


# ----------------------------------------------------------------------------
# the oracle


class Triplet(enum.Enum):
    CLOSER_TO_Y = "closer-to-y"
    CLOSER_TO_Z = "closer-to-z"


class TripletOracle:
    """Answers ``d(x, y) <= d(x, z)`` and counts every answer.

    Ties answer ``CLOSER_TO_Y``. The batch methods are shorthand for the
    equivalent sequence of single queries and are counted as such. The
    counter is safe to update from several threads.
    """

    def __init__(self, metric: Metric):
        self.metric = metric
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def _tally(self, k):
        if k:
            with self._lock:
                self._count += k

    def query(self, x, y, z) -> Triplet:
        with _oracle_access():
            dy = self.metric.dist(x, y)
            dz = self.metric.dist(x, z)
        self._tally(1)
        return Triplet.CLOSER_TO_Y if dy <= dz else Triplet.CLOSER_TO_Z

    def closer_mask(self, xs, y: int, z: int) -> np.ndarray:
        """One query ``(x, y, z)`` per ``x`` in ``xs``; true means closer to ``y``."""
        xs = np.ascontiguousarray(xs, dtype=np.int64)
        with _oracle_access():
            m = self.metric
            if isinstance(m, EuclideanMetric):
                m._guard()
                mask = kernels.closer_mask_euclid(m.dataset.points, xs, int(y), int(z))
            else:
                # symmetric metric: d(x, y) is row y at x
                mask = m.dists(int(y), xs) <= m.dists(int(z), xs)
        self._tally(xs.size)
        return np.asarray(mask, dtype=bool)

    def argmin(self, x, candidates) -> int:
        """Position of the closest candidate to ``x``.

        Equivalent to scanning with queries ``(x, best, next)``, so the first
        minimizer wins and ``len(candidates) - 1`` queries are counted.
        """
        candidates = np.asarray(candidates, dtype=np.int64)
        if candidates.size == 0:
            raise ValueError("no candidates")
        with _oracle_access():
            d = self.metric.dists(x, candidates)
        self._tally(candidates.size - 1)
        return int(np.argmin(d))

    def sort(self, x, candidates) -> list[int]:
        """Candidates ordered by distance to ``x`` using a stable merge sort.

        Uses at most ``m * ceil(log2 m)`` counted queries of form ``(x, a, b)``.
        """
        items = [int(c) for c in candidates]
        if len(items) <= 1:
            return items
        with _oracle_access():
            d = self.metric.dists(x, items)
        key = dict(zip(items, d))  # ids are distinct
        used = 0

        def merge(a, b):
            nonlocal used
            out, i, j = [], 0, 0
            while i < len(a) and j < len(b):
                used += 1
                if key[a[i]] <= key[b[j]]:
                    out.append(a[i])
                    i += 1
                else:
                    out.append(b[j])
                    j += 1
            out.extend(a[i:])
            out.extend(b[j:])
            return out

        def msort(seq):
            if len(seq) <= 1:
                return seq
            mid = len(seq) // 2
            return merge(msort(seq[:mid]), msort(seq[mid:]))

        result = msort(items)
        self._tally(used)
        return result


def triplet_query(oracle: TripletOracle, x, y, z) -> Triplet:
    return oracle.query(x, y, z)


# ----------------------------------------------------------------------------
# exact reference


class Nearest(NamedTuple):
    index: int
    distance: float
    minimizers: tuple[int, ...]


def brute_force_nn(S: Dataset, q: Query, metric: Metric) -> Nearest:
    """Exact nearest neighbor of ``q`` in ``S``; ties go to the smallest id.

    An in-sample query is excluded from its own candidates.
    """
    ids = np.arange(S.n, dtype=np.int64)
    if isinstance(q, Query) and q.in_sample:
        ids = ids[ids != q.point_id]
    elif not isinstance(q, Query):
        q = Query.external(q)
    if ids.size == 0:
        raise ValueError("empty candidate set")
    d = metric.dists(q, ids)
    dmin = d.min()
    mins = tuple(int(i) for i in ids[d == dmin])
    return Nearest(mins[0], float(dmin), mins)


def nearest_all(metric: Metric, queries):
    """Exact nearest neighbor for many queries.

    ``queries`` is a list of :class:`Query`; for in-sample queries the point
    itself is skipped. Returns ``(index, distance)`` arrays.
    """
    ds = metric.dataset
    nq = len(queries)
    skip = np.array([q.point_id if q.in_sample else -1 for q in queries], dtype=np.int64)
    if isinstance(metric, EuclideanMetric):
        Q = np.empty((nq, ds.dim), dtype=np.float64)
        for i, q in enumerate(queries):
            Q[i] = metric._vec(q)
        return kernels.nearest_euclid(ds.points, Q, skip)
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq, dtype=np.float64)
    all_ids = np.arange(ds.n, dtype=np.int64)
    for i, q in enumerate(queries):
        d = metric.dists(q, all_ids)
        if skip[i] >= 0:
            d = d.copy()
            d[skip[i]] = np.inf
        j = int(np.argmin(d))
        if np.isinf(d[j]):
            idx[i], dist[i] = -1, 0.0
        else:
            idx[i], dist[i] = j, d[j]
    return idx, dist
