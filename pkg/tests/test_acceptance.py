"""Acceptance criteria 1 to 10.

Each test prints one ``criterion N PASS|FAIL`` line; the lines are repeated
in the terminal summary. Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import ACCEPTANCE, check_invariants, random_graph
from triplet_nn import (
    CategoricalDataset,
    GraphDataset,
    Query,
    TripletOracle,
    VectorDataset,
    brute_force_nn,
    build_comptree,
    empirical_expansion_rate,
    error_bound,
    generate_synthetic,
    height_bound,
    metric_for,
    nn_search,
    split_balance_trial,
    unbalanced_split_bound,
)
from triplet_nn.bench import BenchConfig, leave_one_out_error, run_benchmark, strip_volatile
from triplet_nn.theory import construction_budget, query_budget

DATA = os.path.join(os.path.dirname(__file__), "data")

# first-run values, frozen
GOLDEN_MEDIAN_HEIGHT = {256: 7, 1024: 11, 4096: 15, 16384: 19}
GOLDEN_MIXTURE_MISS = {4: 0.88644, 64: 0.73008}
GOLDEN_UNIFORM_MISS = {"comptree": 0.1936, "kdtree": 0.1875, "rptree": 0.2188, "patree": 0.1855}


def report(k, ok, detail, started):
    line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:6.1f}s): {detail}"
    ACCEPTANCE[k] = line
    print(line)
    assert ok, line


class TallyOracle(TripletOracle):
    """Oracle that keeps its own count of answers, separate from the built-in one."""

    def __init__(self, metric):
        super().__init__(metric)
        self.tally = 0

    def query(self, x, y, z):
        self.tally += 1
        return super().query(x, y, z)

    def closer_mask(self, xs, y, z):
        self.tally += len(xs)
        return super().closer_mask(xs, y, z)

    def argmin(self, x, candidates):
        self.tally += len(candidates) - 1
        return super().argmin(x, candidates)


def distinct_dataset(kind, n, rng):
    """Points in general position: no two at distance zero."""
    if kind == "dense":
        return VectorDataset(rng.normal(size=(n, int(rng.integers(1, 6)))))
    if kind == "categorical":
        codes = rng.choice(4**6, size=n, replace=False)
        return CategoricalDataset([[f"a{(c >> (2 * k)) & 3}" for k in range(6)] for c in codes])
    if n == 1:
        return GraphDataset(sp.csr_matrix((1, 1)))
    return random_graph(n, rng)[0]


def external_queries(S, rng, k):
    if isinstance(S, VectorDataset):
        return [Query.external(v) for v in rng.normal(size=(k, S.dim))]
    if isinstance(S, CategoricalDataset):
        return [Query.external(tuple(f"a{v}" for v in row)) for row in rng.integers(0, 5, size=(k, S.dim))]
    return []


class Budget:
    def __init__(self):
        self.checked = 0
        self.violations = []

    def build(self, tree, oracle, before, n):
        self.checked += 1
        if not (tree.build_triplets == oracle.count - before == oracle.tally - before):
            self.violations.append(("reconcile", tree.build_triplets, oracle.count, oracle.tally))
        if tree.build_triplets > n * tree.height:
            self.violations.append(("build", n, tree.height, tree.build_triplets))

    def search(self, tree, oracle, rep, before):
        self.checked += 1
        if not (rep.triplets_used == oracle.count - before == oracle.tally - before):
            self.violations.append(("reconcile-q", rep.triplets_used, oracle.count - before))
        if rep.triplets_used > tree.height + tree.n0 - 1:
            self.violations.append(("query", rep.triplets_used, tree.height, tree.n0))


def invariant_workload(budget):
    """1000 seeded builds over all kinds; returns the violation count."""
    rng = np.random.default_rng(2024)
    kinds = ("dense", "categorical", "graph")
    bad = 0
    for i in range(1000):
        kind = kinds[i % 3]
        n = int(rng.integers(1, 513))
        n0 = int(rng.choice([1, 2, 8, 32]))
        seed = int(rng.integers(2**31))
        S = distinct_dataset(kind, n, rng)
        o = TallyOracle(metric_for(S))
        tree = build_comptree(S, n0, seed, o)
        budget.build(tree, o, 0, S.n)
        bad += check_invariants(tree, S)
        bad += tree.dumps() != build_comptree(S, n0, seed, TripletOracle(metric_for(S))).dumps()
        qs = [Query.point(int(j)) for j in rng.integers(S.n, size=3)] if S.n > 1 else []
        for q in qs + external_queries(S, rng, 2):
            before = o.count
            budget.search(tree, o, nn_search(tree, q, o), before)
    return bad


def exact_workload(budget):
    """100 single-leaf trees; returns (queries, misses)."""
    rng = np.random.default_rng(7)
    misses = queries = 0
    for i in range(100):
        kind = ("dense", "categorical", "graph")[i % 3]
        n = int(rng.integers(2, 120))
        S = distinct_dataset(kind, n, rng) if rng.random() < 0.5 else _with_duplicates(kind, n, rng)
        m = metric_for(S)
        o = TallyOracle(m)
        tree = build_comptree(S, n + int(rng.integers(0, 5)), int(rng.integers(1000)), o)
        for q in [Query.point(j) for j in range(S.n)] + external_queries(S, rng, 5):
            before = o.count
            rep = nn_search(tree, q, o)
            budget.search(tree, o, rep, before)
            queries += 1
            misses += rep.neighbor not in brute_force_nn(S, q, m).minimizers
    return queries, misses


@pytest.fixture(scope="module")
def workloads():
    """Criteria 1 and 2 share their builds and searches with the budget audit."""
    budget = Budget()
    t0 = time.perf_counter()
    bad = invariant_workload(budget)
    t1 = time.perf_counter()
    exact = exact_workload(budget)
    return {"budget": budget, "bad": bad, "exact": exact, "elapsed": (t1 - t0, time.perf_counter() - t1)}


def test_criterion_01_structural_invariants(workloads):
    t0 = time.perf_counter() - workloads["elapsed"][0]
    bad = workloads["bad"]
    report(1, bad == 0, f"1000 builds over three metric kinds, {bad} invariant violations", t0)


def test_criterion_02_exact_regime(workloads):
    t0 = time.perf_counter() - workloads["elapsed"][1]
    queries, misses = workloads["exact"]
    report(2, misses == 0, f"{queries} queries on 100 single-leaf trees, {misses} misses", t0)


def _with_duplicates(kind, n, rng):
    if kind == "dense":
        return VectorDataset(rng.integers(0, 3, size=(n, 2)).astype(float))
    if kind == "categorical":
        return CategoricalDataset([[f"t{v}" for v in row] for row in rng.integers(0, 2, size=(n, 3))])
    return distinct_dataset(kind, n, rng)  # graph nodes are always distinct


def test_criterion_03_triplet_budgets(workloads):
    t0 = time.perf_counter()
    budget = workloads["budget"]
    ok = budget.checked > 5000 and not budget.violations
    report(3, ok, f"{budget.checked} builds and searches checked, {len(budget.violations)} violations", t0)


def test_criterion_04_height_bound():
    t0 = time.perf_counter()
    within = runs = 0
    medians = {}
    for n in GOLDEN_MEDIAN_HEIGHT:
        heights = []
        for seed in range(20):
            S = generate_synthetic("uniform-cube", n, 2, seed)
            m = metric_for(S)
            h = build_comptree(S, 16, seed, TripletOracle(m)).height
            c = empirical_expansion_rate(S, m, max_sample=2000, seed=seed).dataset_max
            within += h <= height_bound(n, 16, c, 0.05)
            runs += 1
            heights.append(h)
        medians[n] = float(np.median(heights))
    ok = within >= 0.95 * runs and medians[16384] <= 2 * medians[1024] and medians == GOLDEN_MEDIAN_HEIGHT
    report(4, ok, f"{within}/{runs} runs under the height bound, median heights {medians}", t0)


def test_criterion_05_split_balance():
    t0 = time.perf_counter()
    S = generate_synthetic("line-grid", 1000, 1, 0)
    m = metric_for(S)
    c = empirical_expansion_rate(S, m).dataset_max
    parts = []
    ok = True
    for delta in (0.005, 0.01, 0.02):
        frac = split_balance_trial(range(1000), m, delta, 10_000, 1)
        bound = unbalanced_split_bound(c, delta)
        p = min(1.0, bound)
        ok &= frac <= bound + 3 * math.sqrt(p * (1 - p) / 10_000)
        parts.append(f"delta={delta}: {frac:.4f} <= {bound:.3f}")
    report(5, ok, f"c={c:g}; " + ", ".join(parts), t0)


def test_criterion_06_expansion_oracle():
    t0 = time.perf_counter()
    S = generate_synthetic("line-grid", 128, 1, 0)
    m = metric_for(S)
    prof = empirical_expansion_rate(S, m)
    expected = [2.0] + [3.0] * 126 + [2.0]
    # dense radius sweep as an independent check of the breakpoint method
    dists = np.abs(np.arange(128.0)[:, None] - np.arange(128.0)[None, :])
    sweep = []
    for x in (0, 1, 63, 127):
        d = dists[x]
        radii = np.linspace(0.25, 127, 508)
        sweep.append(max(np.count_nonzero(d <= 2 * r) / np.count_nonzero(d <= r) for r in radii))
    scaled = VectorDataset(S.points * 7.3)
    prof2 = empirical_expansion_rate(scaled, metric_for(scaled))
    ok = prof.values.tolist() == expected and sweep == [2.0, 3.0, 3.0, 2.0]
    ok &= prof.values.tobytes() == prof2.values.tobytes()
    report(6, ok, "endpoints 2, interior 3, sweep agrees, profile unchanged under scaling by 7.3", t0)


def test_criterion_07_error_vs_leaf_size():
    t0 = time.perf_counter()
    S = generate_synthetic("gaussian-mixture", 5000, 10, 0)
    cfg = BenchConfig(dataset="mixture", methods=("comptree", "brute"), n0=(4, 64), seeds=tuple(range(10)))
    rows = run_benchmark(cfg, dataset=S, write=False)
    avg = {n0: np.mean([r.miss_probability for r in rows if r.method == "comptree" and r.n0 == n0]) for n0 in (4, 64)}
    brute_zero = all(r.miss_probability == 0 for r in rows if r.method == "brute")
    golden = all(abs(avg[k] - GOLDEN_MIXTURE_MISS[k]) < 1e-9 for k in avg)
    ok = avg[64] <= avg[4] and brute_zero and golden
    report(7, ok, f"seed-averaged miss n0=4: {avg[4]:.5f}, n0=64: {avg[64]:.5f}; brute all zero: {brute_zero}", t0)


def test_criterion_08_bound_calculators():
    t0 = time.perf_counter()
    checks = [
        height_bound(math.e * 10, 10, 1.0, 1.0) == pytest.approx(99.0, abs=1e-12),
        abs(height_bound(1000, 10, 2.0, 0.05) - 1780.4) <= 0.1,
        error_bound(1, 1, 1, 360) == (1.0, 1.0),
        error_bound(1, 1, 1, 3600)[0] == pytest.approx(0.1, rel=1e-15),
        error_bound(2, 0.5, 2, 10_000)[1] == 1.0,
        error_bound(2, 0.5, 2, 10_000)[0] == pytest.approx(57.6, rel=1e-15),
        construction_budget(1000, 1780.4) == pytest.approx(1_780_400, rel=1e-15),
        query_budget(99, 1) == 100,
        height_bound(10, 10, 3.0, math.e) == 0.0,
    ]
    report(8, all(checks), f"{sum(checks)}/{len(checks)} worked examples reproduced", t0)


def test_criterion_09_baselines():
    t0 = time.perf_counter()
    S = generate_synthetic("uniform-cube", 2000, 2, 0)
    cfg = BenchConfig(dataset="uniform", methods=tuple(GOLDEN_UNIFORM_MISS), n0=(16,), seeds=tuple(range(5)))
    rows = run_benchmark(cfg, dataset=S, write=False)
    avg = {m: float(np.mean([r.miss_probability for r in rows if r.method == m])) for m in GOLDEN_UNIFORM_MISS}
    exact = all(leave_one_out_error(m, S, 2000, 0)[0] == 0.0 for m in ("kdtree", "rptree", "patree"))
    ratio = avg["comptree"] / avg["rptree"]
    golden = all(abs(avg[m] - GOLDEN_UNIFORM_MISS[m]) < 1e-9 for m in avg)
    ok = all(avg[m] < 0.5 for m in ("kdtree", "rptree", "patree")) and exact and ratio < 5 and golden
    shown = ", ".join(f"{m} {v:.4f}" for m, v in avg.items())
    report(9, ok, f"miss at n0=16: {shown}; comptree/rptree {ratio:.2f}; exact at n0>=n: {exact}", t0)


def test_criterion_10_cli_end_to_end(tmp_path):
    t0 = time.perf_counter()
    cfg = os.path.join(DATA, "cli_bench.cfg")
    outs = {}
    for label, extra in (("seq", []), ("par", ["--parallel", "--workers", "4"])):
        out = tmp_path / f"{label}.csv"
        cmd = [sys.executable, "-m", "triplet_nn", "bench", "run", "--config", cfg, "--out", str(out), *extra]
        subprocess.run(cmd, check=True, capture_output=True)
        outs[label] = strip_volatile(out.read_text())
    with open(os.path.join(DATA, "cli_golden.csv")) as fh:
        golden = strip_volatile(fh.read())
    ok = outs["seq"] == golden and outs["par"] == outs["seq"]
    report(10, ok, f"golden match {outs['seq'] == golden}, parallel identical {outs['par'] == outs['seq']}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
