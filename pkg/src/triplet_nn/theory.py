"""Height / budget / error bounds and empirical expansion-rate estimates."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .metrics import Dataset, EuclideanMetric, Metric, Query, TripletOracle, metric_for

MAX_EXPANSION_SAMPLE = 10_000
#: relative slack on ball radii, so rescaling the metric cannot flip ties
BALL_TOL = 1e-9


def height_bound(n: int, n0: int, c_tilde: float, epsilon: float) -> float:
    """High-probability tree height bound ``3 ln(e/eps) + 96 c^2 ln(n/n0)``."""
    if not 1 <= n0 <= n:
        raise ValueError("need 1 <= n0 <= n")
    if c_tilde < 1:
        raise ValueError("c_tilde must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 3.0 * (1.0 - math.log(epsilon)) + 96.0 * c_tilde**2 * math.log(n / n0)


def construction_budget(n: int, h_star: float) -> float:
    if n < 0 or h_star < 0:
        raise ValueError("inputs must be non-negative")
    return n * h_star


def query_budget(h_star: float, n0: int) -> float:
    if n0 < 0 or h_star < 0:
        raise ValueError("inputs must be non-negative")
    return h_star + n0


def error_bound(C: float, alpha: float, c_tilde: float, n0: int) -> tuple[float, float]:
    """Miss-probability bound ``360 C c^2 n0^-alpha / alpha`` as ``(raw, min(1, raw))``."""
    if C <= 0:
        raise ValueError("C must be positive")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if c_tilde < 1:
        raise ValueError("c_tilde must be >= 1")
    if n0 < 1:
        raise ValueError("n0 must be at least 1")
    raw = 360.0 * C * c_tilde**2 * n0 ** (-alpha) / alpha
    return raw, min(1.0, raw)


@dataclass
class BoundReport:
    n: int
    n0: int
    c_tilde: float
    epsilon: float
    h_star: float
    construction_budget: float
    query_budget: float
    C: float | None = None
    alpha: float | None = None
    error_bound_raw: float | None = None
    error_bound_clamped: float | None = None

    def to_dict(self):
        return asdict(self)


def bound_report(n, n0, c_tilde, epsilon, C=None, alpha=None) -> BoundReport:
    h = height_bound(n, n0, c_tilde, epsilon)
    raw = clamped = None
    if C is not None and alpha is not None:
        raw, clamped = error_bound(C, alpha, c_tilde, n0)
    return BoundReport(
        n=n,
        n0=n0,
        c_tilde=c_tilde,
        epsilon=epsilon,
        h_star=h,
        construction_budget=construction_budget(n, h),
        query_budget=query_budget(h, n0),
        C=C,
        alpha=alpha,
        error_bound_raw=raw,
        error_bound_clamped=clamped,
    )


# ----------------------------------------------------------------------------
# expansion rates


@dataclass
class ExpansionProfile:
    point_ids: np.ndarray
    values: np.ndarray

    @property
    def dataset_max(self) -> float:
        return float(self.values.max())

    @property
    def sample_size(self) -> int:
        return int(self.values.size)

    def summary(self) -> dict:
        v = self.values
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        return {
            "sample_size": self.sample_size,
            "dataset_max": self.dataset_max,
            "min": float(v.min()),
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point_id", "c_tilde"])
            for i, v in zip(self.point_ids, self.values):
                w.writerow([int(i), repr(float(v))])


def _default_sample(n, max_sample, seed):
    if n <= max_sample:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=max_sample, replace=False)).astype(np.int64)


def empirical_expansion_rate(
    S: Dataset,
    metric: Metric,
    sample=None,
    *,
    max_sample: int = MAX_EXPANSION_SAMPLE,
    seed: int = 0,
    tol: float = BALL_TOL,
) -> ExpansionProfile:
    """Pointwise expansion rates with ``A = S``.

    For each sampled ``x`` this is the largest ``|B(x, 2r)| / |B(x, r)|`` over
    all radii, using closed balls. Both counts are step functions that only
    change at distances from ``x`` and at half those distances, so those
    radii are enough. A ball of radius ``r`` holds distances up to
    ``r * (1 + tol)``.
    """
    if S.n < 2:
        raise ValueError("need at least two points")
    if sample is None:
        sample = _default_sample(S.n, max_sample, seed)
    sample = np.asarray(sorted(set(int(i) for i in sample)), dtype=np.int64)
    if sample.size == 0:
        raise ValueError("sample must be non-empty")
    if sample.size > max_sample:
        sample = np.sort(np.random.default_rng(seed).choice(sample, size=max_sample, replace=False))
    if sample[0] < 0 or sample[-1] >= S.n:
        raise IndexError("sample id out of range")
    if isinstance(metric, EuclideanMetric):
        values = kernels.expansion_rates_euclid(metric.dataset.points, sample, tol)
    else:
        all_ids = np.arange(S.n, dtype=np.int64)
        values = np.array(
            [kernels.expansion_ratio_sorted(np.sort(metric.dists(int(x), all_ids)), tol) for x in sample],
            dtype=np.float64,
        )
    return ExpansionProfile(sample, np.asarray(values, dtype=np.float64))


def node_expansion_rates(tree, S: Dataset, n_nodes: int = 10, seed: int = 0, **kw) -> list[tuple[int, float]]:
    """Dataset-max expansion rate of ``A`` for sampled internal nodes ``A`` of a tree."""
    internal = np.flatnonzero(tree.left_child >= 0)
    if internal.size == 0:
        return []
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(internal, size=min(n_nodes, internal.size), replace=False))
    out = []
    for node in picks:
        sub = S.subset(tree.members(int(node)))
        out.append((int(node), empirical_expansion_rate(sub, metric_for(sub), **kw).dataset_max))
    return out


def estimate_growth_exponent(
    S: Dataset, metric: Metric, q, resolution: float = 0.01, tol: float = BALL_TOL
) -> float:
    """Smallest ``D >= 1`` (on a grid) with ``|B(q, lr)| <= l^D |B(q, r)|``.

    Checked over every pair of breakpoint radii ``r < lr`` with ``r`` at least
    the nearest-neighbor distance, using ``A = S``. An in-sample query is left
    out of ``S``. The pair starting at the nearest-neighbor distance stands
    for radii just above it. Radii closer than ``tol`` (relative) are merged.
    """
    if S.n < 2:
        raise ValueError("need at least two points")
    q = q if isinstance(q, Query) else Query.external(q)
    ids = np.arange(S.n, dtype=np.int64)
    if q.in_sample:
        ids = ids[ids != q.point_id]
    d = np.sort(metric.dists(q, ids))
    if d[-1] == 0.0:
        raise ValueError("query coincides with every point")
    radii = []
    for r in np.unique(d[d > 0.0]):
        if not radii or r > radii[-1] * (1.0 + tol):
            radii.append(r)
    radii = np.asarray(radii)
    counts = np.searchsorted(d, radii * (1.0 + tol), side="right").astype(np.float64)
    need = 1.0
    for i in range(radii.size - 1):
        lam = radii[i + 1 :] / radii[i]
        ratio = counts[i + 1 :] / counts[i]
        need = max(need, float(np.max(np.log(ratio) / np.log(lam))))
    steps = math.ceil(need / resolution - 1e-9)
    # the grid value must satisfy every pair; step up if rounding says otherwise
    while True:
        D = max(1.0, steps * resolution)
        if all(
            np.all(counts[i + 1 :] <= (radii[i + 1 :] / radii[i]) ** D * counts[i] * (1 + 1e-12))
            for i in range(radii.size - 1)
        ):
            return round(D, 10)
        steps += 1


# ----------------------------------------------------------------------------
# split balance


def unbalanced_split_bound(c_tilde: float, delta: float) -> float:
    """Upper bound ``4 c^2 delta`` on the chance of a child below ``delta |A|``."""
    return 4.0 * c_tilde**2 * delta


def split_balance_trial(A, metric: Metric, delta: float, trials: int, seed: int) -> float:
    """Fraction of random two-pivot splits of ``A`` leaving a child below ``delta |A|``."""
    A = np.asarray(sorted(set(int(a) for a in A)), dtype=np.int64)
    m = A.size
    if m < 2:
        raise ValueError("need |A| >= 2")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    oracle = TripletOracle(metric)
    rng = np.random.default_rng(seed)
    first = rng.integers(m, size=trials)
    second = rng.integers(m - 1, size=trials)
    second += second >= first
    limit = delta * m
    bad = 0
    keep = np.ones(m, dtype=bool)
    for i, j in zip(first, second):
        keep[[i, j]] = False
        left = 1 + int(np.count_nonzero(oracle.closer_mask(A[keep], int(A[i]), int(A[j]))))
        keep[[i, j]] = True
        if min(left, m - left) < limit:
            bad += 1
    return bad / trials
