"""Cholesky factorization and triangular solves vectorized over a batch axis.

numpy's batched LAPACK calls pay a fixed cost per matrix, which dominates
for thousands of 6x6 systems. These routines work on particle-last arrays
(shape (p, p, n) and (p, n)) so every elementary operation is a contiguous
vector op across the batch.
"""

import numpy as np


def cholesky(a):
    """Lower factor L with L[:, :, i] @ L[:, :, i].T = a[:, :, i]."""
    p = a.shape[0]
    L = np.zeros_like(a)
    for j in range(p):
        d = a[j, j] - (L[j, :j] ** 2).sum(axis=0) if j else a[j, j].copy()
        if np.any(d <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        L[j, j] = np.sqrt(d)
        inv = 1.0 / L[j, j]
        for i in range(j + 1, p):
            acc = a[i, j] - (L[i, :j] * L[j, :j]).sum(axis=0) if j else a[i, j]
            L[i, j] = acc * inv
    return L


def solve_lower(L, b):
    """Solve L x = b with b of shape (p, n) or (p, m, n)."""
    p = L.shape[0]
    x = np.empty_like(b)
    for i in range(p):
        acc = b[i].copy()
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    return x


def solve_upper_t(L, b):
    """Solve L.T x = b for lower-triangular L."""
    p = L.shape[0]
    x = np.empty_like(b)
    for i in range(p - 1, -1, -1):
        acc = b[i].copy()
        for k in range(i + 1, p):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x
