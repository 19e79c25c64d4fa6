# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the dynamic-programming hot loops.

See ``_kernels_py`` for the reference semantics; this module exists
because the p-variation DP and the N-functional greedy scan are O(N^2)
with data-dependent recurrences that NumPy cannot express without
Python-level row loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()

BACKEND_NAME = "cython"


def pvar_dp(double[:, :] costs):
    """Best partition value for superadditive interval costs (O(n^2))."""
    cdef Py_ssize_t n = costs.shape[0]
    cdef cnp.ndarray[double, ndim=1] dp_arr = np.zeros(n)
    cdef double[:] dp = dp_arr
    cdef Py_ssize_t i, j
    cdef double best, cand
    for j in range(1, n):
        best = dp[0] + costs[0, j]
        for i in range(1, j):
            cand = dp[i] + costs[i, j]
            if cand > best:
                best = cand
        dp[j] = best
    return float(dp[n - 1])


cdef inline double _cost1(double[:, :] r1, Py_ssize_t i, Py_ssize_t j,
                          Py_ssize_t d, double q) noexcept nogil:
    cdef double s = 0.0, x
    cdef Py_ssize_t a
    for a in range(d):
        x = r1[j, a] - r1[i, a]
        s += x * x
    return pow(s, q / 2.0)


cdef inline double _cost2(double[:, :] r1, double[:, :, :] r2,
                          Py_ssize_t i, Py_ssize_t j, Py_ssize_t d, double q) noexcept nogil:
    cdef double s = 0.0, x
    cdef Py_ssize_t a, b
    for a in range(d):
        for b in range(d):
            x = r2[j, a, b] - r2[i, a, b] - r1[i, a] * (r1[j, b] - r1[i, b])
            s += x * x
    return pow(s, q / 2.0)


cdef inline double _cost3(double[:, :] r1, double[:, :, :] r2, double[:, :, :, :] r3,
                          Py_ssize_t i, Py_ssize_t j, Py_ssize_t d, double q) noexcept nogil:
    cdef double s = 0.0, x, x2bc
    cdef Py_ssize_t a, b, c
    for a in range(d):
        for b in range(d):
            for c in range(d):
                x2bc = r2[j, b, c] - r2[i, b, c] - r1[i, b] * (r1[j, c] - r1[i, c])
                x = (r3[j, a, b, c] - r3[i, a, b, c]
                     - r2[i, a, b] * (r1[j, c] - r1[i, c])
                     - r1[i, a] * x2bc)
                s += x * x
    return pow(s, q / 2.0)


def nfunc_scan(double[:, :] r1, double[:, :, :] r2, double[:, :, :, :] r3,
               int level, double p, double beta):
    """Greedy block scan of the p-variation control against ``beta``."""
    cdef Py_ssize_t n = r1.shape[0]
    cdef Py_ssize_t d = r1.shape[1]
    cdef double q1 = p, q2 = p / 2.0, q3 = p / 3.0
    cdef cnp.ndarray[double, ndim=1] dp1_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] dp2_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] dp3_arr = np.zeros(n)
    cdef double[:] dp1 = dp1_arr
    cdef double[:] dp2 = dp2_arr
    cdef double[:] dp3 = dp3_arr
    cdef Py_ssize_t a = 0, i, j
    cdef Py_ssize_t hit_j = 0
    cdef double best, cand, omega
    cdef int hit
    breaks = []

    while a < n - 1:
        dp1[a] = 0.0
        dp2[a] = 0.0
        dp3[a] = 0.0
        hit = 0
        for j in range(a + 1, n):
            omega = 0.0
            best = dp1[a] + _cost1(r1, a, j, d, q1)
            for i in range(a + 1, j):
                cand = dp1[i] + _cost1(r1, i, j, d, q1)
                if cand > best:
                    best = cand
            dp1[j] = best
            omega += best
            if level >= 2:
                best = dp2[a] + _cost2(r1, r2, a, j, d, q2)
                for i in range(a + 1, j):
                    cand = dp2[i] + _cost2(r1, r2, i, j, d, q2)
                    if cand > best:
                        best = cand
                dp2[j] = best
                omega += best
            if level >= 3:
                best = dp3[a] + _cost3(r1, r2, r3, a, j, d, q3)
                for i in range(a + 1, j):
                    cand = dp3[i] + _cost3(r1, r2, r3, i, j, d, q3)
                    if cand > best:
                        best = cand
                dp3[j] = best
                omega += best
            if omega >= beta:
                hit = 1
                hit_j = j
                breaks.append(j)
                break
        # no negative list indexing here: wraparound is off module-wide
        if not hit or hit_j == n - 1:
            break
        a = hit_j
    count = sum(1 for b in breaks if b < n - 1)
    return count, breaks
