"""Shared fixtures and independent reference implementations.

The ``ref_*`` helpers recompute distances, nearest neighbors and expansion
ratios with plain Python loops so the package can be checked against code
that shares nothing with it.
"""

import math

import numpy as np
import pytest

from triplet_nn import CategoricalDataset, GraphDataset, TripletOracle, VectorDataset, build_comptree
from triplet_nn.metrics import metric_for

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


def line(*vals):
    return VectorDataset(np.asarray(vals, dtype=np.float64)[:, None])


def triangle():
    return GraphDataset.from_edges([(0, 1, 2), (1, 2, 3), (0, 2, 10)])


def random_graph(n, rng, max_w=5):
    edges = [(i, int(rng.integers(i)), int(rng.integers(1, max_w + 1))) for i in range(1, n)]
    for a, b in rng.integers(n, size=(n // 2 + 1, 2)):
        if a != b:
            edges.append((int(a), int(b), int(rng.integers(1, max_w + 1))))
    return GraphDataset.from_edges(edges), edges


def random_dataset(kind, n, rng):
    """Small synthetic data of each kind; duplicates show up on purpose."""
    if kind == "dense":
        if rng.random() < 0.5:
            return VectorDataset(rng.normal(size=(n, int(rng.integers(1, 5)))))
        return VectorDataset(rng.integers(0, 4, size=(n, 2)).astype(float))
    if kind == "categorical":
        k = int(rng.integers(1, 6))
        return CategoricalDataset([[f"t{v}" for v in row] for row in rng.integers(0, 3, size=(n, k))])
    if n < 2:
        return line(0.0)
    return random_graph(n, rng)[0]


def ref_floyd(n, edges):
    """All-pairs shortest paths by Floyd-Warshall over labelled edges."""
    labels = sorted({e[0] for e in edges} | {e[1] for e in edges})
    pos = {v: i for i, v in enumerate(labels)}
    D = [[0.0 if i == j else math.inf for j in range(len(labels))] for i in range(len(labels))]
    for e in edges:
        u, v = pos[e[0]], pos[e[1]]
        w = abs(float(e[2])) if len(e) > 2 else 1.0
        if u != v:
            D[u][v] = D[v][u] = min(D[u][v], w)
    m = len(labels)
    for k in range(m):
        for i in range(m):
            for j in range(m):
                if D[i][k] + D[k][j] < D[i][j]:
                    D[i][j] = D[i][k] + D[k][j]
    return labels, D


def ref_dist(S, i, j):
    """Distance between stored points by the textbook rule for each kind."""
    if isinstance(S, VectorDataset):
        return math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(S.points[i], S.points[j])))
    if isinstance(S, CategoricalDataset):
        return float(sum(a != b for a, b in zip(S.payload(i), S.payload(j))))
    return float(S.row(int(S.nodes[i]))[S.nodes[j]])


def ref_nn_set(S, i):
    """Minimizer set of d(i, .) over S minus i."""
    d = [(ref_dist(S, i, j), j) for j in range(S.n) if j != i]
    best = min(x for x, _ in d)
    return best, {j for x, j in d if x == best}


def ref_ball_ratio(dists, tol=1e-9):
    """Max |B(2r)|/|B(r)| by trying every radius in {d, d/2} with plain loops."""
    radii = set()
    for d in dists:
        if d > 0:
            radii.add(d)
            radii.add(d / 2)
    best = 1.0
    for r in radii:
        small = sum(1 for d in dists if d <= r * (1 + tol))
        big = sum(1 for d in dists if d <= 2 * r * (1 + tol))
        best = max(best, big / small)
    return best


def comptree_with_root(S, n0, pivots, seeds=range(5000)):
    """First seed whose root pivots are ``pivots``, with the built tree."""
    for seed in seeds:
        tree = build_comptree(S, n0, seed, TripletOracle(metric_for(S)))
        if tree.n_nodes > 1 and (int(tree.left_pivot[0]), int(tree.right_pivot[0])) == pivots:
            return seed, tree
    raise AssertionError(f"no seed gives root pivots {pivots}")


def check_invariants(tree, S):
    """Partition, assignment and size rules; returns the number of violations."""
    m = metric_for(S)
    bad = 0
    seen = np.concatenate([tree.members(k) for k in tree.leaves()])
    bad += not np.array_equal(np.sort(seen), np.arange(S.n))
    for k in range(tree.n_nodes):
        mem = tree.members(k)
        if tree.left_child[k] < 0:
            bad += mem.size > tree.n0 and not tree.frozen[k]
            bad += tree.frozen[k] and bool(np.any(m.dists(int(mem[0]), mem) != 0))
            continue
        bad += mem.size <= tree.n0
        L, R = tree.members(tree.left_child[k]), tree.members(tree.right_child[k])
        bad += L.size == 0 or R.size == 0
        bad += not np.array_equal(np.sort(np.concatenate([L, R])), np.sort(mem))
        x1, x2 = int(tree.left_pivot[k]), int(tree.right_pivot[k])
        bad += x1 not in L or x2 not in R
        bad += bool(np.any(m.dists(x1, L) > m.dists(x2, L)))
        Ro = R[R != x2]
        bad += bool(np.any(m.dists(x1, Ro) <= m.dists(x2, Ro)))
    return int(bad)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
