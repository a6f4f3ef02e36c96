# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: directed Forman edge curvatures and pairwise manifold distances."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, atan2, asinh, fabs

cnp.import_array()


def forman_directed(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices, const double[::1] w):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, j, p, q
    cdef double wi, wj, base, s1, s2
    out = np.empty(indices.shape[0], dtype=np.float64)
    cdef double[::1] f = out
    for i in range(n):
        wi = w[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            wj = w[j]
            base = wi * wi + wj * wj
            s1 = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                if indices[q] != j:
                    s1 += pow((wi * wi + w[indices[q]] * w[indices[q]]) / base, 0.25) * w[indices[q]]
            s2 = 0.0
            for q in range(indptr[j], indptr[j + 1]):
                if indices[q] != i:
                    s2 += pow((wi * wi + w[indices[q]] * w[indices[q]]) / base, 0.25) * w[indices[q]]
            f[p] = wi + wj - s1 - s2
    return out


def pairwise_distance(const double[:, ::1] x, const double[:, ::1] y, double kappa):
    # chord-length forms: exact zero on the diagonal, no acos cancellation near 1
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef Py_ssize_t a, b, k
    cdef double dm, dp, t
    cdef double root = sqrt(fabs(kappa))
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for a in range(n):
        for b in range(m):
            dm = 0.0
            dp = 0.0
            if kappa > 0:
                for k in range(d):
                    t = x[a, k] - y[b, k]
                    dm += t * t
                    t = x[a, k] + y[b, k]
                    dp += t * t
                o[a, b] = 2.0 * atan2(sqrt(dm), sqrt(dp)) / root
            else:
                t = x[a, 0] - y[b, 0]
                dm = -t * t
                for k in range(1, d):
                    t = x[a, k] - y[b, k]
                    dm += t * t
                if dm < 0.0:
                    dm = 0.0
                o[a, b] = 2.0 * asinh(0.5 * root * sqrt(dm)) / root
    return out
