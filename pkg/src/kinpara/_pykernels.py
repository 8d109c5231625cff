"""NumPy versions of the compiled particle kernels."""
from __future__ import annotations

import numpy as np


def pair_force(X: np.ndarray, a: np.ndarray, b: np.ndarray, kappa: float, chunk: int = 256) -> np.ndarray:
    n = len(X)
    out = np.zeros(n)
    if n == 0:
        return out
    k = np.arange(len(a))
    for s in range(0, n, chunk):
        d = kappa * (X[s:s + chunk, None] - X[None, :])
        acc = np.zeros(d.shape)
        for kk in k:
            acc += a[kk] * np.cos(kk * d) + b[kk] * np.sin(kk * d)
        rows = np.arange(s, min(s + chunk, n))
        acc[rows - s, rows] = 0.0
        out[s:s + chunk] = acc.sum(axis=1) / n
    return out


def bilinear_periodic(W: np.ndarray, x0: float, dx: float, v0: float, dv: float,
                      X: np.ndarray, V: np.ndarray) -> np.ndarray:
    nx, nv = W.shape
    sx = (X - x0) / dx
    sv = (V - v0) / dv
    fx = np.floor(sx)
    fv = np.floor(sv)
    i0 = fx.astype(np.int64) % nx
    j0 = fv.astype(np.int64) % nv
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % nv
    sx = sx - fx
    sv = sv - fv
    return ((1 - sx) * (1 - sv) * W[i0, j0] + sx * (1 - sv) * W[i1, j0]
            + (1 - sx) * sv * W[i0, j1] + sx * sv * W[i1, j1])
