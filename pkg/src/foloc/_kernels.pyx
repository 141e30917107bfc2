# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled correlation-stack kernel; mirrors ``_kernels_py.correlation_stack``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def correlation_stack(const double[::1] x, Py_ssize_t m, Py_ssize_t tau, Py_ssize_t n, Py_ssize_t d_max):
    """Rows d = 1..d_max of 2D correlations between motif pairs at lag d,
    zero-padded to the d = 1 length.  Returns ``(G, degenerate_count)``."""
    cdef Py_ssize_t R = x.shape[0] - (m - 1) * tau
    cdef Py_ssize_t C = R - n
    cdef Py_ssize_t size = n * m
    G_arr = np.zeros((d_max, C), dtype=np.float64)
    cdef double[:, ::1] G = G_arr
    cdef Py_ssize_t d, s, i, j, L, p, q
    cdef Py_ssize_t degenerate = 0
    cdef double ma, mb, sab, saa, sbb, den, a, b, amin, amax, bmin, bmax
    cdef double inv = 1.0 / size
    for d in range(1, d_max + 1):
        L = R - n * d
        for s in range(L):
            ma = 0.0
            mb = 0.0
            amin = amax = x[s]
            bmin = bmax = x[s + d]
            for i in range(n):
                for j in range(m):
                    p = s + i * d + j * tau
                    q = p + d
                    a = x[p]
                    b = x[q]
                    ma += a
                    mb += b
                    if a < amin:
                        amin = a
                    elif a > amax:
                        amax = a
                    if b < bmin:
                        bmin = b
                    elif b > bmax:
                        bmax = b
            if amin == amax or bmin == bmax:
                degenerate += 1
                continue
            ma *= inv
            mb *= inv
            sab = 0.0
            saa = 0.0
            sbb = 0.0
            for i in range(n):
                for j in range(m):
                    p = s + i * d + j * tau
                    a = x[p] - ma
                    b = x[p + d] - mb
                    sab += a * b
                    saa += a * a
                    sbb += b * b
            den = sqrt(saa) * sqrt(sbb)
            if den > 0.0:
                G[d - 1, s] = sab / den
            else:
                degenerate += 1
    return G_arr, degenerate
