# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled particle kernels; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor

cnp.import_array()


def pair_force(const double[::1] X, const double[::1] a, const double[::1] b, double kappa):
    """``F_i = N^-1 sum_{j != i} K(X_i - X_j)`` with ``K(x) = sum_k a_k cos(k kappa x) + b_k sin(k kappa x)``."""
    cdef Py_ssize_t n = X.shape[0], m = a.shape[0], i, j, k
    cdef double d, c1, s1, ck, sk, tmp, acc
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] F = out
    if n == 0:
        return out
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            d = kappa * (X[i] - X[j])
            c1 = cos(d)
            s1 = sin(d)
            ck = 1.0
            sk = 0.0
            acc += a[0]
            for k in range(1, m):
                tmp = ck * c1 - sk * s1
                sk = sk * c1 + ck * s1
                ck = tmp
                acc += a[k] * ck + b[k] * sk
        F[i] = acc / n
    return out


def bilinear_periodic(const double[:, ::1] W, double x0, double dx, double v0, double dv,
                      const double[::1] X, const double[::1] V):
    """Bilinear interpolation of grid values, periodic in both directions."""
    cdef Py_ssize_t nx = W.shape[0], nv = W.shape[1], n = X.shape[0], p, i0, i1, j0, j1
    cdef double fx, fv, sx, sv
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] R = out
    for p in range(n):
        sx = (X[p] - x0) / dx
        sv = (V[p] - v0) / dv
        fx = floor(sx)
        fv = floor(sv)
        i0 = (<Py_ssize_t> fx) % nx
        j0 = (<Py_ssize_t> fv) % nv
        if i0 < 0:
            i0 += nx
        if j0 < 0:
            j0 += nv
        i1 = (i0 + 1) % nx
        j1 = (j0 + 1) % nv
        sx -= fx
        sv -= fv
        R[p] = ((1 - sx) * (1 - sv) * W[i0, j0] + sx * (1 - sv) * W[i1, j0]
                + (1 - sx) * sv * W[i0, j1] + sx * sv * W[i1, j1])
    return out
