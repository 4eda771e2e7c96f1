"""Comparison tree: random two-pivot splits and defeatist search.

Construction and search touch the metric only through a
:class:`~triplet_nn.metrics.TripletOracle`.

The tree is stored flat. Node ``k`` owns the slice
``order[start[k]:end[k]]`` of a permuted id array; the left child's
members come first, and members are kept in ascending id order inside
every node.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .metrics import Dataset, Query, Triplet, TripletOracle

FORMAT = "triplet-nn-tree"
VERSION = 1


class StrandedQueryError(LookupError):
    """Leave-one-out query is alone in its leaf and sibling fallback is off."""


@dataclass(frozen=True, eq=False)
class CompTree:
    n: int
    n0: int
    seed: int
    order: np.ndarray
    start: np.ndarray
    end: np.ndarray
    left_pivot: np.ndarray
    right_pivot: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    frozen: np.ndarray
    build_triplets: int
    overhead_triplets: int
    dataset_fingerprint: str | None = None
    height: int = field(init=False)

    method = "comptree"

    def __post_init__(self):
        leaves = self.left_child < 0
        object.__setattr__(self, "height", int(self.depth[leaves].max()))

    @property
    def n_nodes(self) -> int:
        return self.start.size

    def is_leaf(self, node: int) -> bool:
        return self.left_child[node] < 0

    def members(self, node: int) -> np.ndarray:
        return self.order[self.start[node] : self.end[node]]

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left_child < 0)

    @property
    def max_leaf_size(self) -> int:
        """``n0``, or the largest frozen leaf if one is bigger."""
        sizes = (self.end - self.start)[self.left_child < 0]
        return int(max(self.n0, sizes.max()))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "method": self.method,
            "n": self.n,
            "n0": self.n0,
            "seed": self.seed,
            "dataset": self.dataset_fingerprint,
            "build_triplets": self.build_triplets,
            "overhead_triplets": self.overhead_triplets,
            "order": self.order.tolist(),
            # start, end, left_pivot, right_pivot, left_child, right_child, frozen
            "nodes": [
                [int(v) for v in row]
                for row in zip(
                    self.start,
                    self.end,
                    self.left_pivot,
                    self.right_pivot,
                    self.left_child,
                    self.right_child,
                    self.frozen,
                )
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, d: dict) -> "CompTree":
        if d.get("format") != FORMAT or d.get("method") != cls.method:
            raise ValueError("not a comparison tree record")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported tree format version {d.get('version')}")
        nodes = np.asarray(d["nodes"], dtype=np.int64).reshape(-1, 7)
        start, end, lp, rp, lc, rc, frozen = nodes.T
        parent = np.full(len(nodes), -1, dtype=np.int64)
        depth = np.zeros(len(nodes), dtype=np.int64)
        for k in range(len(nodes)):  # children are always created after their parent
            if lc[k] >= 0:
                parent[lc[k]] = parent[rc[k]] = k
                depth[lc[k]] = depth[rc[k]] = depth[k] + 1
        return cls(
            n=int(d["n"]),
            n0=int(d["n0"]),
            seed=int(d["seed"]),
            order=np.asarray(d["order"], dtype=np.int64),
            start=start.copy(),
            end=end.copy(),
            left_pivot=lp.copy(),
            right_pivot=rp.copy(),
            left_child=lc.copy(),
            right_child=rc.copy(),
            parent=parent,
            depth=depth,
            frozen=frozen.astype(bool),
            build_triplets=int(d["build_triplets"]),
            overhead_triplets=int(d["overhead_triplets"]),
            dataset_fingerprint=d.get("dataset"),
        )

    @classmethod
    def loads(cls, text: str) -> "CompTree":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "CompTree":
        with open(path) as fh:
            return cls.loads(fh.read())


def _node_rng(seed: int, path: int) -> np.random.Generator:
    # one stream per node, keyed by its heap-style path (root 1, children 2p, 2p+1)
    return np.random.default_rng([seed, path])


def _split(seg: np.ndarray, oracle: TripletOracle, rng: np.random.Generator):
    """Split one node. Returns ``(left_mask, x1, x2, overhead)`` or ``None`` if frozen."""
    m = seg.size
    overhead = 0
    precheck = False  # once a duplicate pair shows up, test pairs before splitting
    for _ in range(m):
        i = int(rng.integers(m))
        j = int(rng.integers(m - 1))
        j += j >= i
        x1, x2 = int(seg[i]), int(seg[j])
        if precheck:
            overhead += 1
            if oracle.query(x1, x2, x1) is Triplet.CLOSER_TO_Y:
                continue
        keep = np.ones(m, dtype=bool)
        keep[[i, j]] = False
        others = seg[keep]
        side = oracle.closer_mask(others, x1, x2)
        if not precheck and others.size and side.all():
            # every non-pivot went left: this is what a zero-distance pivot pair looks like
            overhead += 1
            if oracle.query(x1, x2, x1) is Triplet.CLOSER_TO_Y:
                overhead += others.size
                precheck = True
                continue
        mask = np.empty(m, dtype=bool)
        mask[keep] = side
        mask[i], mask[j] = True, False
        return mask, x1, x2, overhead

    # resampling kept hitting duplicates: look for any point apart from seg[0]
    x1 = int(seg[0])
    for j in range(1, m):
        overhead += 1
        if oracle.query(x1, int(seg[j]), x1) is Triplet.CLOSER_TO_Z:
            x2 = int(seg[j])
            keep = np.ones(m, dtype=bool)
            keep[[0, j]] = False
            side = oracle.closer_mask(seg[keep], x1, x2)
            mask = np.empty(m, dtype=bool)
            mask[keep] = side
            mask[0], mask[j] = True, False
            return mask, x1, x2, overhead
    return None, -1, -1, overhead


def build_comptree(S: Dataset, n0: int, seed: int, oracle: TripletOracle) -> CompTree:
    """Build a comparison tree over all points of ``S`` with leaves of at most ``n0``.

    Each oversized node draws two distinct pivots uniformly at random and
    sends every other member ``x`` left iff ``d(x, x1) <= d(x, x2)``. The first
    pivot always goes left, the second always right.

    A node whose members are all at distance 0 from each other cannot be
    split and is kept as an oversized, ``frozen`` leaf.
    """
    if int(n0) < 1:
        raise ValueError("n0 must be at least 1")
    n = S.n if S is not None else oracle.metric.dataset.n
    if n < 1:
        raise ValueError("empty dataset")
    n0, seed = int(n0), int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")

    order = np.arange(n, dtype=np.int64)
    start, end, lp, rp, lc, rc, parent, depth, frozen = [0], [n], [-1], [-1], [-1], [-1], [-1], [0], [False]
    before = oracle.count
    overhead = 0
    stack = [(0, 1)]
    while stack:
        node, path = stack.pop()
        s, e = start[node], end[node]
        if e - s <= n0:
            continue
        seg = order[s:e]
        mask, x1, x2, extra = _split(seg, oracle, _node_rng(seed, path))
        overhead += extra
        if mask is None:
            frozen[node] = True
            continue
        left, right = seg[mask], seg[~mask]
        order[s:e] = np.concatenate([left, right])
        mid = s + left.size
        lp[node], rp[node] = x1, x2
        for child_start, child_end in ((s, mid), (mid, e)):
            start.append(child_start)
            end.append(child_end)
            for lst in (lp, rp, lc, rc):
                lst.append(-1)
            parent.append(node)
            depth.append(depth[node] + 1)
            frozen.append(False)
        lc[node], rc[node] = len(start) - 2, len(start) - 1
        stack.append((rc[node], 2 * path + 1))
        stack.append((lc[node], 2 * path))

    fingerprint = S.fingerprint() if S is not None else None
    arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return CompTree(
        n=n,
        n0=n0,
        seed=seed,
        order=order,
        start=arr(start),
        end=arr(end),
        left_pivot=arr(lp),
        right_pivot=arr(rp),
        left_child=arr(lc),
        right_child=arr(rc),
        parent=arr(parent),
        depth=arr(depth),
        frozen=np.asarray(frozen, dtype=bool),
        build_triplets=oracle.count - before,
        overhead_triplets=overhead,
        dataset_fingerprint=fingerprint,
    )


@dataclass
class SearchReport:
    neighbor: int
    triplets_used: int
    leaf_depth: int
    leaf_size: int
    fallback: bool = False
    distance: float | None = None  # filled in by evaluation code only


def _descend(tree: CompTree, q: Query, oracle: TripletOracle, node: int = 0):
    used = 0
    lc, rc, lp, rp = tree.left_child, tree.right_child, tree.left_pivot, tree.right_pivot
    while lc[node] >= 0:
        used += 1
        if oracle.query(q, int(lp[node]), int(rp[node])) is Triplet.CLOSER_TO_Y:
            node = lc[node]
        else:
            node = rc[node]
    return int(node), used


def _leaf_for(tree: CompTree, q: Query, oracle: TripletOracle, sibling_fallback: bool):
    leaf, used = _descend(tree, q, oracle)
    cands = tree.members(leaf)
    fallback = False
    if q.in_sample:
        cands = cands[cands != q.point_id]
        if cands.size == 0:
            if not sibling_fallback or tree.parent[leaf] < 0:
                raise StrandedQueryError(f"query {q.point_id} is alone in its leaf")
            up = tree.parent[leaf]
            sib = tree.right_child[up] if tree.left_child[up] == leaf else tree.left_child[up]
            leaf, extra = _descend(tree, q, oracle, int(sib))
            used += extra
            cands = tree.members(leaf)
            fallback = True
    return leaf, cands, used, fallback


def _as_query(q) -> Query:
    return q if isinstance(q, Query) else Query.external(q)


def nn_search(tree: CompTree, q, oracle: TripletOracle, *, sibling_fallback: bool = True) -> SearchReport:
    """Defeatist nearest-neighbor search.

    Descends by one triplet per level, then scans the leaf with
    ``(q, best, next)`` comparisons. An in-sample query is skipped during the
    scan; if that empties the leaf, the sibling subtree is searched instead
    and the report is flagged.
    """
    q = _as_query(q)
    leaf, cands, used, fallback = _leaf_for(tree, q, oracle, sibling_fallback)
    pos = oracle.argmin(q, cands)
    used += cands.size - 1
    return SearchReport(
        neighbor=int(cands[pos]),
        triplets_used=used,
        leaf_depth=int(tree.depth[leaf]),
        leaf_size=int(tree.end[leaf] - tree.start[leaf]),
        fallback=fallback,
    )


def leaf_candidates(tree: CompTree, q, oracle: TripletOracle, k: int, *, sibling_fallback: bool = True) -> list[int]:
    """Up to ``k`` members of the query's leaf, closest first."""
    if int(k) < 1:
        raise ValueError("k must be at least 1")
    q = _as_query(q)
    _, cands, _, _ = _leaf_for(tree, q, oracle, sibling_fallback)
    return oracle.sort(q, cands)[: int(k)]


class TreeStats(NamedTuple):
    height: int
    leaf_sizes: dict
    nodes_per_depth: list
    build_triplets: int
    n_leaves: int
    frozen_leaves: int


def tree_stats(tree) -> TreeStats:
    """Height, leaf-size histogram and per-depth node counts from a full traversal."""
    per_depth = Counter()
    sizes = Counter()
    height = 0
    n_leaves = 0
    stack = [0]
    while stack:
        node = stack.pop()
        d = int(tree.depth[node])
        per_depth[d] += 1
        if tree.left_child[node] < 0:
            n_leaves += 1
            sizes[int(tree.end[node] - tree.start[node])] += 1
            height = max(height, d)
        else:
            stack.extend((int(tree.right_child[node]), int(tree.left_child[node])))
    return TreeStats(
        height=height,
        leaf_sizes=dict(sorted(sizes.items())),
        nodes_per_depth=[per_depth[d] for d in range(height + 1)],
        build_triplets=getattr(tree, "build_triplets", 0),
        n_leaves=n_leaves,
        frozen_leaves=int(np.count_nonzero(tree.frozen)),
    )
