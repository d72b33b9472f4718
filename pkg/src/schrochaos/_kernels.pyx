# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the permanent-family sums.

Gray-code walk over column subsets: each step flips one column in or out of
the running row sums, so one inclusion-exclusion term costs O(n) instead of
O(n^2).  Signed accumulation is compensated (Kahan) because the terms
alternate in sign and partially cancel.  All cores run without the GIL so
replicate loops can use threads.
"""

import numpy as np


cdef inline int _flip_index(unsigned long long x) nogil:
    cdef int j = 0
    while not (x & 1):
        x >>= 1
        j += 1
    return j


cdef double _per_core(const double* w, int n, double* r) nogil:
    cdef unsigned long long k, gray, prev = 0, limit = (<unsigned long long>1) << n
    cdef int i, j, size = 0
    cdef double total = 0.0, comp = 0.0
    cdef double prod, term, y, t
    for i in range(n):
        r[i] = 0.0
    for k in range(1, limit):
        gray = k ^ (k >> 1)
        j = _flip_index(gray ^ prev)
        if gray & (gray ^ prev):
            for i in range(n):
                r[i] += w[i * n + j]
            size += 1
        else:
            for i in range(n):
                r[i] -= w[i * n + j]
            size -= 1
        prev = gray
        prod = 1.0
        for i in range(n):
            prod *= r[i]
        term = prod if ((n - size) & 1) == 0 else -prod
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


cdef void _sweep_core(const double* w, const double* e, int n,
                      double* r, double* q, double* out) nogil:
    cdef unsigned long long k, gray, prev = 0, limit = (<unsigned long long>1) << n
    cdef int i, j, size = 0
    cdef double per = 0.0, per_c = 0.0, num = 0.0, num_c = 0.0
    cdef double prod, ratio, term, y, t
    for i in range(n):
        r[i] = 0.0
        q[i] = 0.0
    for k in range(1, limit):
        gray = k ^ (k >> 1)
        j = _flip_index(gray ^ prev)
        if gray & (gray ^ prev):
            for i in range(n):
                r[i] += w[i * n + j]
                q[i] += e[i * n + j]
            size += 1
        else:
            for i in range(n):
                r[i] -= w[i * n + j]
                q[i] -= e[i * n + j]
            size -= 1
        prev = gray
        prod = 1.0
        ratio = 0.0
        for i in range(n):
            prod *= r[i]
            ratio += q[i] / r[i]
        if ((n - size) & 1) == 0:
            term = prod
        else:
            term = -prod
        y = term - per_c
        t = per + y
        per_c = (t - per) - y
        per = t
        term = term * ratio
        y = term - num_c
        t = num + y
        num_c = (t - num) - y
        num = t
    out[0] = per
    out[1] = num


cdef double _per_minor(const double* w, int n, int skip_i, int skip_j,
                       double* scratch, double* r) nogil:
    cdef int i, j, m = n - 1, row = 0, col
    if m == 0:
        return 1.0
    for i in range(n):
        if i == skip_i:
            continue
        col = 0
        for j in range(n):
            if j == skip_j:
                continue
            scratch[row * m + col] = w[i * n + j]
            col += 1
        row += 1
    return _per_core(scratch, m, r)


def permanent_scaled(w):
    """Permanent of a positive square float matrix."""
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef int n = wv.shape[0]
    if wv.shape[1] != n:
        raise ValueError("matrix must be square")
    cdef double[::1] rv = np.empty(n, dtype=np.float64)
    cdef double res
    with nogil:
        res = _per_core(&wv[0, 0], n, &rv[0])
    return res


def value_and_numerator(w, etaw):
    """Return (per(w), sum_ij etaw[i,j] * per(minor_ij(w))) in one sweep."""
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] ev = np.ascontiguousarray(etaw, dtype=np.float64)
    cdef int n = wv.shape[0]
    if wv.shape[1] != n or ev.shape[0] != n or ev.shape[1] != n:
        raise ValueError("matrices must be square and of equal size")
    cdef double[::1] rv = np.empty(n, dtype=np.float64)
    cdef double[::1] qv = np.empty(n, dtype=np.float64)
    cdef double out[2]
    with nogil:
        _sweep_core(&wv[0, 0], &ev[0, 0], n, &rv[0], &qv[0], out)
    return out[0], out[1]


def minors_matrix(w):
    """All first minors' permanents: out[i, j] = per(w minus row i, col j)."""
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef int n = wv.shape[0]
    if wv.shape[1] != n:
        raise ValueError("matrix must be square")
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] ov = out_arr
    cdef double[:, ::1] scratch = np.empty((max(n - 1, 1), max(n - 1, 1)), dtype=np.float64)
    cdef double[::1] rv = np.empty(max(n - 1, 1), dtype=np.float64)
    cdef int i, j
    with nogil:
        for i in range(n):
            for j in range(n):
                ov[i, j] = _per_minor(&wv[0, 0], n, i, j, &scratch[0, 0], &rv[0])
    return out_arr


NAME = "c"
