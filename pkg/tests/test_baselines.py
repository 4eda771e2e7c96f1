import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplet_nn import Query, VectorDataset, build_baseline, build_kdtree, build_patree, build_rptree, defeatist_query
from triplet_nn.baselines import AxisSplitTree, median_threshold, principal_axis, project
from triplet_nn.comptree import tree_stats

METHODS = ("kdtree", "rptree", "patree")


def leaf_sets(t):
    return sorted(sorted(t.members(k).tolist()) for k in range(t.n_nodes) if t.left_child[k] < 0)


def violations(t, X):
    bad = 0
    leaves = [k for k in range(t.n_nodes) if t.left_child[k] < 0]
    seen = np.concatenate([t.members(k) for k in leaves])
    bad += not np.array_equal(np.sort(seen), np.arange(len(X)))
    for k in range(t.n_nodes):
        mem = t.members(k)
        if t.left_child[k] < 0:
            bad += mem.size > t.n0 and not t.frozen[k]
            continue
        L, R = t.members(t.left_child[k]), t.members(t.right_child[k])
        bad += L.size == 0 or R.size == 0
        bad += bool(np.any(t.project(k, X[L]) > t.threshold[k]))
        bad += bool(np.any(t.project(k, X[R]) <= t.threshold[k]))
    return int(bad)


SQUARE_ROW = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)


def test_kdtree_example():
    t = build_kdtree(SQUARE_ROW, 2)
    assert t.axis[0] == 0
    assert leaf_sets(t) == [[0, 1], [2, 3]]
    assert defeatist_query(t, [0.4, 0.0])[0] == 0


def test_threshold_goes_left():
    t = build_kdtree(SQUARE_ROW, 2)
    assert t.threshold[0] == 1.0
    nb, _, depth = defeatist_query(t, [1.0, 5.0])
    assert depth == 1 and nb in (0, 1)


@pytest.mark.parametrize("method", METHODS)
def test_small_set_is_a_leaf(method):
    t = build_baseline(method, SQUARE_ROW, 4, 0)
    assert t.n_nodes == 1 and t.height == 0


@pytest.mark.parametrize("method", METHODS)
def test_identical_points_freeze(method):
    t = build_baseline(method, np.ones((6, 3)), 2, 0)
    assert t.n_nodes == 1 and t.frozen[0]


def test_median_rule():
    assert median_threshold(np.array([3.0, 1.0, 2.0])) == 2.0  # odd count: median goes left
    assert median_threshold(np.array([1.0, 2.0, 3.0, 4.0])) == 2.0
    assert median_threshold(np.array([1.0, 5.0, 5.0, 5.0])) == 1.0  # ties at the top
    assert median_threshold(np.array([2.0, 2.0])) is None


def test_rptree_on_a_line_is_a_median_split():
    X = np.arange(9, dtype=float)[:, None]
    t = build_rptree(X, 4, 3)
    L = sorted(t.members(t.left_child[0]).tolist())
    assert L in ([0, 1, 2, 3, 4], [4, 5, 6, 7, 8])


def test_rptree_seeded():
    X = np.random.default_rng(0).normal(size=(200, 4))
    assert build_rptree(X, 5, 1).dumps() == build_rptree(X, 5, 1).dumps()
    assert build_rptree(X, 5, 1).dumps() != build_rptree(X, 5, 2).dumps()


def test_patree_collinear_axis():
    u = np.array([3.0, 4.0]) / 5
    X = np.outer(np.arange(10.0), u) + 1.0
    t = build_patree(X, 5)
    assert abs(abs(t.direction[0] @ u) - 1) < 1e-12
    assert sorted(t.members(t.left_child[0]).tolist()) in ([0, 1, 2, 3, 4], [5, 6, 7, 8, 9])


def test_patree_balanced_on_symmetric_cloud():
    a, b, c = np.array([1.0, 0.3]), np.array([-0.4, 0.9]), np.array([0.7, -0.6])
    X = np.array([a, -a, b, -b, c, -c])
    t = build_patree(X, 3)
    assert [t.members(c).size for c in (t.left_child[0], t.right_child[0])] == [3, 3]


def test_power_iteration_residual():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(30):
        X = rng.normal(size=(int(rng.integers(20, 200)), int(rng.integers(2, 8)))) * rng.random(1) * 5
        Xc = X - X.mean(axis=0)
        C = Xc.T @ Xc
        lam = np.linalg.eigvalsh(C)[::-1]
        if lam[1] / lam[0] > 0.8:
            continue  # near-degenerate top pair: 100 iterations cannot separate it
        v = principal_axis(Xc)
        top = v @ C @ v
        assert np.linalg.norm(C @ v - top * v) <= 1e-6 * top
        checked += 1
    assert checked >= 10


@pytest.mark.parametrize("method", METHODS)
def test_random_invariants(method):
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(1, 300))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        if rng.random() < 0.3:
            X = np.round(X)
        t = build_baseline(method, X, int(rng.choice([1, 2, 8, 32])), int(rng.integers(100)))
        assert violations(t, X) == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=40), st.integers(1, 4))
def test_invariants_property(pts, n0):
    X = np.array(pts, dtype=float)
    for m in METHODS:
        assert violations(build_baseline(m, X, n0, 7), X) == 0


@pytest.mark.parametrize("method", METHODS)
def test_exact_when_everything_is_one_leaf(method):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    t = build_baseline(method, X, 50, 0)
    for i in range(50):
        d = np.linalg.norm(X - X[i], axis=1)
        d[i] = np.inf
        nb, dist, _ = defeatist_query(t, Query.point(i))
        assert nb == int(np.argmin(d))


def test_leave_one_out_falls_back_to_sibling():
    X = np.array([[0.0], [10.0]])
    t = build_kdtree(X, 1)
    assert defeatist_query(t, Query.point(0))[0] == 1


def test_dimension_mismatch():
    t = build_kdtree(SQUARE_ROW, 2)
    with pytest.raises(ValueError):
        defeatist_query(t, [1.0, 2.0, 3.0])


def test_non_vector_data_rejected():
    from triplet_nn import CategoricalDataset

    with pytest.raises(ValueError):
        build_kdtree(CategoricalDataset([("a",), ("b",)]), 1)


def test_accepts_vector_dataset():
    S = VectorDataset(SQUARE_ROW)
    assert leaf_sets(build_kdtree(S, 2)) == [[0, 1], [2, 3]]


@pytest.mark.parametrize("method", METHODS)
def test_roundtrip(method, tmp_path):
    X = np.random.default_rng(2).normal(size=(120, 3))
    t = build_baseline(method, X, 4, 9)
    p = tmp_path / "t.json"
    t.save(p)
    u = AxisSplitTree.load(p, X)
    assert u.dumps() == t.dumps()
    for q in np.random.default_rng(3).normal(size=(20, 3)):
        assert defeatist_query(u, q) == defeatist_query(t, q)
    assert tree_stats(u).height == t.height


def test_projection_is_row_consistent():
    rng = np.random.default_rng(4)
    P = rng.normal(size=(100, 7))
    v = rng.normal(size=7)
    whole = project(P, v)
    assert all(project(P[i], v) == whole[i] for i in range(100))
