"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module exactly, including the
left-to-right accumulation order of squared differences.
"""

import numpy as np


def _sq_accumulate(diff):
    acc = diff[..., 0] * diff[..., 0]
    for k in range(1, diff.shape[-1]):
        acc += diff[..., k] * diff[..., k]
    return acc


def euclid_dists(X, ids, q):
    """Euclidean distances from ``q`` to the rows ``X[ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.empty(0, dtype=np.float64)
    return np.sqrt(_sq_accumulate(X[ids] - q))


def hamming_dists(C, ids, q):
    """Number of differing coordinates between ``q`` and each row ``C[ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    return np.count_nonzero(C[ids] != q, axis=1).astype(np.float64)


def closer_mask_euclid(X, ids, y, z):
    """``mask[a]`` is true iff d(X[ids[a]], X[y]) <= d(X[ids[a]], X[z])."""
    return euclid_dists(X, ids, X[y]) <= euclid_dists(X, ids, X[z])


def nearest_euclid(X, Q, skip):
    """Exact nearest row of ``X`` for every row of ``Q`` (see the compiled twin)."""
    nq = Q.shape[0]
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq, dtype=np.float64)
    if X.shape[0] == 0:
        idx.fill(-1)
        dist.fill(0.0)
        return idx, dist
    chunk = max(1, (1 << 21) // max(1, X.shape[0] * X.shape[1]))
    for lo in range(0, nq, chunk):
        hi = min(nq, lo + chunk)
        D = np.sqrt(_sq_accumulate(X[None, :, :] - Q[lo:hi, None, :]))
        rows = np.arange(hi - lo)
        own = skip[lo:hi]
        has = own >= 0
        D[rows[has], own[has]] = np.inf
        arg = np.argmin(D, axis=1)
        best = D[rows, arg]
        empty = np.isinf(best)
        arg[empty] = -1
        best[empty] = 0.0
        idx[lo:hi] = arg
        dist[lo:hi] = best
    return idx, dist


def expansion_ratio_sorted(D, tol=1e-9):
    """Largest |B(x, 2r)| / |B(x, r)| over breakpoint radii, from sorted distances."""
    D = np.asarray(D, dtype=np.float64)
    radii = np.unique(D[D > 0.0])
    if radii.size == 0:
        return 1.0
    grow = 1.0 + tol
    cnt_r = np.searchsorted(D, radii * grow, side="right")
    cnt_2r = np.searchsorted(D, (2.0 * radii) * grow, side="right")
    cnt_half = np.searchsorted(D, (0.5 * radii) * grow, side="right")
    best = max(np.max(cnt_2r / cnt_r), np.max(cnt_r / cnt_half))
    return float(max(1.0, best))


def expansion_rates_euclid(X, centres, tol=1e-9):
    """Pointwise expansion ratios of the rows ``X[centres]`` against all of ``X``."""
    all_ids = np.arange(X.shape[0], dtype=np.int64)
    out = np.empty(len(centres), dtype=np.float64)
    for a, c in enumerate(centres):
        out[a] = expansion_ratio_sorted(np.sort(euclid_dists(X, all_ids, X[c])), tol)
    return out
