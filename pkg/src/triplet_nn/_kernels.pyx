# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Every function here has a numpy twin in ``_fallback`` with the same
signature. Both accumulate squared differences left to right over the
coordinates and take one ``sqrt``, so distances agree bit for bit.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from libcpp.algorithm cimport sort

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef inline double _sqeuclid(const double[:, ::1] X, idx_t i, const double[::1] q) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, t
    for k in range(X.shape[1]):
        t = X[i, k] - q[k]
        s += t * t
    return s


cdef inline double _sqeuclid_rows(const double[:, ::1] X, idx_t i, idx_t j) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, t
    for k in range(X.shape[1]):
        t = X[i, k] - X[j, k]
        s += t * t
    return s


def euclid_dists(const double[:, ::1] X, const idx_t[::1] ids, const double[::1] q):
    """Euclidean distances from ``q`` to the rows ``X[ids]``."""
    cdef Py_ssize_t m = ids.shape[0], a
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for a in range(m):
            o[a] = sqrt(_sqeuclid(X, ids[a], q))
    return out


def hamming_dists(const int[:, ::1] C, const idx_t[::1] ids, const int[::1] q):
    """Number of differing coordinates between ``q`` and each row ``C[ids]``."""
    cdef Py_ssize_t m = ids.shape[0], a, k
    cdef int c
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for a in range(m):
            c = 0
            for k in range(C.shape[1]):
                if C[ids[a], k] != q[k]:
                    c += 1
            o[a] = c
    return out


def closer_mask_euclid(const double[:, ::1] X, const idx_t[::1] ids, idx_t y, idx_t z):
    """``mask[a]`` is true iff d(X[ids[a]], X[y]) <= d(X[ids[a]], X[z])."""
    cdef Py_ssize_t m = ids.shape[0], a
    out = np.empty(m, dtype=np.bool_)
    cdef cnp.npy_bool[::1] o = out
    with nogil:
        for a in range(m):
            o[a] = sqrt(_sqeuclid_rows(X, y, ids[a])) <= sqrt(_sqeuclid_rows(X, z, ids[a]))
    return out


def nearest_euclid(const double[:, ::1] X, const double[:, ::1] Q, const idx_t[::1] skip):
    """Exact nearest row of ``X`` for every row of ``Q``.

    ``skip[i] >= 0`` excludes that row of ``X`` from query ``i``'s candidates.
    Ties go to the smallest index. Returns ``(index, distance)`` arrays; the
    index is -1 when no candidate is left.
    """
    cdef Py_ssize_t nq = Q.shape[0], n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, t, best
    cdef idx_t arg
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq, dtype=np.float64)
    cdef idx_t[::1] oi = idx
    cdef double[::1] od = dist
    for i in prange(nq, nogil=True, schedule="static"):
        best = 0.0
        arg = -1
        for j in range(n):
            if j == skip[i]:
                continue
            s = 0.0
            for k in range(d):
                t = X[j, k] - Q[i, k]
                s = s + t * t
            s = sqrt(s)
            if arg < 0 or s < best:
                best = s
                arg = j
        oi[i] = arg
        od[i] = best
    return idx, dist


cdef double _ratio_sorted(const double* D, Py_ssize_t n, double tol) noexcept nogil:
    # D ascending and includes the centre itself at 0; a ball of radius r
    # holds every distance <= r * (1 + tol)
    cdef Py_ssize_t i = 0, j, within = 0, up = 0, half = 0
    cdef double r, best = 1.0, v, grow = 1.0 + tol
    while i < n:
        r = D[i]
        j = i
        while j < n and D[j] == r:
            j += 1
        if r > 0.0:
            while within < n and D[within] <= r * grow:
                within += 1
            while up < n and D[up] <= (2.0 * r) * grow:
                up += 1
            while half < n and D[half] <= (0.5 * r) * grow:
                half += 1
            v = <double>up / <double>within
            if v > best:
                best = v
            v = <double>within / <double>half
            if v > best:
                best = v
        i = j
    return best


def expansion_ratio_sorted(const double[::1] D, double tol=1e-9):
    """Largest |B(x, 2r)| / |B(x, r)| over breakpoint radii, from sorted distances."""
    if D.shape[0] == 0:
        return 1.0
    return _ratio_sorted(&D[0], D.shape[0], tol)


def expansion_rates_euclid(const double[:, ::1] X, const idx_t[::1] centres, double tol=1e-9):
    """Pointwise expansion ratios of the rows ``X[centres]`` against all of ``X``."""
    cdef Py_ssize_t m = centres.shape[0], n = X.shape[0], a, j
    cdef double* buf
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil, parallel():
        buf = <double*>malloc(n * sizeof(double))
        for a in prange(m, schedule="dynamic"):
            for j in range(n):
                buf[j] = sqrt(_sqeuclid_rows(X, centres[a], j))
            sort(buf, buf + n)
            o[a] = _ratio_sorted(buf, n, tol)
        free(buf)
    return out
