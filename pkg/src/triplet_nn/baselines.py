"""Euclidean partition trees used as reference points: KD, RP and PA trees.

All three split a node at the median of a 1-d projection of its members;
they differ only in the projection:

* ``kdtree``: the coordinate with the largest spread,
* ``rptree``: a random unit direction,
* ``patree``: the top principal axis, found by power iteration.

Values ``<= threshold`` go left. With an odd count the median element goes
left. Unlike the comparison tree these trees read coordinates directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .metrics import DENSE, Dataset, Query

FORMAT = "triplet-nn-tree"
VERSION = 1
METHODS = ("kdtree", "rptree", "patree")

POWER_ITERATIONS = 100
POWER_RTOL = 1e-9
_RP_RETRIES = 10


@dataclass(eq=False)
class AxisSplitTree:
    method: str
    n: int
    n0: int
    seed: int | None
    order: np.ndarray
    start: np.ndarray
    end: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    frozen: np.ndarray
    axis: np.ndarray  # coordinate index for kdtree nodes, -1 otherwise
    direction: np.ndarray  # (n_nodes, dim); rows of internal rptree/patree nodes
    threshold: np.ndarray
    points: np.ndarray | None = field(default=None, repr=False)
    height: int = field(init=False)

    def __post_init__(self):
        self.height = int(self.depth[self.left_child < 0].max())

    def members(self, node):
        return self.order[self.start[node] : self.end[node]]

    def project(self, node, x):
        a = self.axis[node]
        if a >= 0:
            return x[..., a]
        return project(x, self.direction[node])

    @property
    def n_nodes(self):
        return self.start.size

    def to_dict(self):
        internal = self.left_child >= 0
        return {
            "format": FORMAT,
            "version": VERSION,
            "method": self.method,
            "n": self.n,
            "n0": self.n0,
            "seed": self.seed,
            "order": self.order.tolist(),
            # start, end, left_child, right_child, axis, frozen
            "nodes": [
                [int(v) for v in row]
                for row in zip(self.start, self.end, self.left_child, self.right_child, self.axis, self.frozen)
            ],
            "threshold": [float(t) if i else None for t, i in zip(self.threshold, internal)],
            "direction": [
                self.direction[k].tolist() if internal[k] and self.axis[k] < 0 else None for k in range(self.n_nodes)
            ],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, d, points=None):
        if d.get("format") != FORMAT or d.get("method") not in METHODS:
            raise ValueError("not a baseline tree record")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported tree format version {d.get('version')}")
        nodes = np.asarray(d["nodes"], dtype=np.int64).reshape(-1, 6)
        start, end, lc, rc, axis, frozen = (c.copy() for c in nodes.T)
        k = len(nodes)
        parent = np.full(k, -1, dtype=np.int64)
        depth = np.zeros(k, dtype=np.int64)
        for i in range(k):
            if lc[i] >= 0:
                parent[lc[i]] = parent[rc[i]] = i
                depth[lc[i]] = depth[rc[i]] = depth[i] + 1
        dims = [len(v) for v in d["direction"] if v is not None]
        dim = dims[0] if dims else (points.shape[1] if points is not None else 1)
        direction = np.zeros((k, dim))
        for i, v in enumerate(d["direction"]):
            if v is not None:
                direction[i] = v
        threshold = np.array([np.nan if t is None else t for t in d["threshold"]], dtype=np.float64)
        return cls(
            method=d["method"],
            n=int(d["n"]),
            n0=int(d["n0"]),
            seed=d.get("seed"),
            order=np.asarray(d["order"], dtype=np.int64),
            start=start,
            end=end,
            left_child=lc,
            right_child=rc,
            parent=parent,
            depth=depth,
            frozen=frozen.astype(bool),
            axis=axis,
            direction=direction,
            threshold=threshold,
            points=points,
        )

    @classmethod
    def load(cls, path, points=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), points)


def project(P, v):
    """``P @ v`` with a fixed left-to-right summation, identical for one row or many."""
    acc = P[..., 0] * v[0]
    for k in range(1, v.size):
        acc = acc + P[..., k] * v[k]
    return acc


def _points_of(data) -> np.ndarray:
    if isinstance(data, Dataset):
        if data.kind != DENSE:
            raise ValueError(f"baseline trees need a {DENSE} dataset, got {data.kind}")
        return data.points
    pts = np.ascontiguousarray(data, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-d array")
    return pts


def median_threshold(proj: np.ndarray):
    """Threshold putting ``ceil(m/2)`` values left, or ``None`` if all are equal.

    When ties at the median would send everything left, the threshold drops
    to the largest value below the maximum.
    """
    vals = np.sort(proj)
    t = vals[(vals.size + 1) // 2 - 1]
    if t >= vals[-1]:
        below = vals[vals < vals[-1]]
        if below.size == 0:
            return None
        t = below[-1]
    return float(t)


def principal_axis(Xc: np.ndarray, iterations: int = POWER_ITERATIONS, rtol: float = POWER_RTOL):
    """Top eigenvector of ``Xc.T @ Xc`` by power iteration, without forming it.

    Starts from the member farthest from the centroid. Returns ``None`` when
    every centred row is zero.
    """
    norms = np.einsum("ij,ij->i", Xc, Xc)
    i = int(np.argmax(norms))
    if norms[i] == 0.0:
        return None
    v = Xc[i] / math.sqrt(norms[i])
    for _ in range(iterations):
        w = Xc.T @ (Xc @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return v
        w /= nw
        change = np.linalg.norm(w - v)
        v = w
        if change < rtol:
            break
    return v


def _split_rule(method, P, rng):
    """Return ``(axis, direction, threshold)`` for member coordinates ``P`` or ``None``."""
    if method == "kdtree":
        spread = P.max(axis=0) - P.min(axis=0)
        a = int(np.argmax(spread))
        if spread[a] == 0.0:
            return None
        t = median_threshold(P[:, a])
        return (a, None, t) if t is not None else None
    if method == "rptree":
        for _ in range(_RP_RETRIES):
            v = rng.standard_normal(P.shape[1])
            v /= np.linalg.norm(v)
            t = median_threshold(project(P, v))
            if t is not None:
                return -1, v, t
        return None
    if method == "patree":
        v = principal_axis(P - P.mean(axis=0))
        if v is None:
            return None
        t = median_threshold(project(P, v))
        return (-1, v, t) if t is not None else None
    raise ValueError(f"unknown method {method!r}")


def _build(method, data, n0, seed=None) -> AxisSplitTree:
    X = _points_of(data)
    n, dim = X.shape
    if n < 1:
        raise ValueError("empty dataset")
    if int(n0) < 1:
        raise ValueError("n0 must be at least 1")
    n0 = int(n0)
    order = np.arange(n, dtype=np.int64)
    start, end, lc, rc, parent, depth, frozen, axis = [0], [n], [-1], [-1], [-1], [0], [False], [-1]
    dirs, thr = [None], [np.nan]
    stack = [(0, 1)]
    while stack:
        node, path = stack.pop()
        s, e = start[node], end[node]
        if e - s <= n0:
            continue
        seg = order[s:e]
        P = X[seg]
        rng = np.random.default_rng([seed, path]) if method == "rptree" else None
        rule = _split_rule(method, P, rng)
        if rule is None:
            frozen[node] = True
            continue
        a, v, t = rule
        proj = P[:, a] if a >= 0 else project(P, v)
        mask = proj <= t
        left, right = seg[mask], seg[~mask]
        order[s:e] = np.concatenate([left, right])
        mid = s + left.size
        axis[node], dirs[node], thr[node] = a, v, t
        for cs, ce in ((s, mid), (mid, e)):
            start.append(cs)
            end.append(ce)
            lc.append(-1)
            rc.append(-1)
            parent.append(node)
            depth.append(depth[node] + 1)
            frozen.append(False)
            axis.append(-1)
            dirs.append(None)
            thr.append(np.nan)
        lc[node], rc[node] = len(start) - 2, len(start) - 1
        stack.append((rc[node], 2 * path + 1))
        stack.append((lc[node], 2 * path))

    direction = np.zeros((len(start), dim))
    for k, v in enumerate(dirs):
        if v is not None:
            direction[k] = v
    arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return AxisSplitTree(
        method=method,
        n=n,
        n0=n0,
        seed=seed,
        order=order,
        start=arr(start),
        end=arr(end),
        left_child=arr(lc),
        right_child=arr(rc),
        parent=arr(parent),
        depth=arr(depth),
        frozen=np.asarray(frozen, dtype=bool),
        axis=arr(axis),
        direction=direction,
        threshold=np.asarray(thr, dtype=np.float64),
        points=X,
    )


def build_kdtree(points, n0: int) -> AxisSplitTree:
    """KD tree splitting on the coordinate of largest spread at its median."""
    return _build("kdtree", points, n0)


def build_rptree(points, n0: int, seed: int) -> AxisSplitTree:
    """Random projection tree: a seeded Gaussian direction per node, median split."""
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    return _build("rptree", points, n0, int(seed))


def build_patree(points, n0: int) -> AxisSplitTree:
    """Principal axis tree: split along each node's top principal component."""
    return _build("patree", points, n0)


def build_baseline(method: str, points, n0: int, seed: int = 0) -> AxisSplitTree:
    if method == "kdtree":
        return build_kdtree(points, n0)
    if method == "rptree":
        return build_rptree(points, n0, seed)
    if method == "patree":
        return build_patree(points, n0)
    raise ValueError(f"unknown baseline {method!r}")


def _descend(tree, x, node=0):
    while tree.left_child[node] >= 0:
        node = tree.left_child[node] if tree.project(node, x) <= tree.threshold[node] else tree.right_child[node]
    return int(node)


def defeatist_query(tree: AxisSplitTree, q, points=None):
    """Greedy descent plus exhaustive leaf scan. Returns ``(id, distance, leaf_depth)``.

    ``q`` is a coordinate vector or a :class:`Query`; an in-sample query is
    skipped in the scan, and if it is alone in its leaf the sibling subtree
    is searched instead.
    """
    X = tree.points if points is None else _points_of(points)
    skip = -1
    if isinstance(q, Query):
        if q.in_sample:
            skip = q.point_id
            x = X[skip]
        else:
            x = np.asarray(q.payload, dtype=np.float64).reshape(-1)
    else:
        x = np.asarray(q, dtype=np.float64).reshape(-1)
    if x.size != X.shape[1]:
        raise ValueError(f"dimension mismatch: expected {X.shape[1]}, got {x.size}")
    leaf = _descend(tree, x)
    cands = tree.members(leaf)
    if skip >= 0:
        cands = cands[cands != skip]
        if cands.size == 0:
            up = tree.parent[leaf]
            if up < 0:
                raise LookupError("no candidate besides the query")
            sib = tree.right_child[up] if tree.left_child[up] == leaf else tree.left_child[up]
            leaf = _descend(tree, x, int(sib))
            cands = tree.members(leaf)
    d = kernels.euclid_dists(X, cands, np.ascontiguousarray(x))
    j = int(np.argmin(d))
    return int(cands[j]), float(d[j]), int(tree.depth[leaf])
