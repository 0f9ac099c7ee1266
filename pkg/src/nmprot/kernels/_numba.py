"""Numba-jitted kernels, loop-for-loop equivalents of ``_numpy.py``.

Scalars and accumulators are cast to the array dtype up front so float32
inputs stay on the float32 SIMD path instead of bouncing through float64.
Reductions are serial (no ``parallel=True``) so a given input always
produces the same bits, which the gradient checker relies on.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def softmax_rows(x):
    r, c = x.shape
    y = np.empty_like(x)
    for i in range(r):
        mx = x[i, 0]
        for j in range(1, c):
            if x[i, j] > mx:
                mx = x[i, j]
        s = x.dtype.type(0.0)
        for j in range(c):
            e = np.exp(x[i, j] - mx)
            y[i, j] = e
            s += e
        for j in range(c):
            y[i, j] = y[i, j] / s
    return y


@njit(cache=True)
def masked_softmax_rows(x, mask):
    r, c = x.shape
    neg_inf = x.dtype.type(-np.inf)
    y = np.zeros_like(x)
    for i in range(r):
        mx = neg_inf
        for j in range(c):
            if mask[i, j] and x[i, j] > mx:
                mx = x[i, j]
        s = x.dtype.type(0.0)
        for j in range(c):
            if mask[i, j]:
                e = np.exp(x[i, j] - mx)
                y[i, j] = e
                s += e
        for j in range(c):
            if mask[i, j]:
                y[i, j] = y[i, j] / s
    return y


@njit(cache=True)
def softmax_rows_backward(y, gy):
    r, c = y.shape
    gx = np.empty_like(y)
    for i in range(r):
        dot = y.dtype.type(0.0)
        for j in range(c):
            dot += y[i, j] * gy[i, j]
        for j in range(c):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return gx


@njit(cache=True, fastmath={"contract", "reassoc", "arcp"})
def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    t = p.dtype.type
    lr_t, b1, b2 = t(lr), t(beta1), t(beta2)
    eps_t, c1_t, c2_t = t(eps), t(c1), t(c2)
    one = t(1.0)
    for i in range(p.size):
        m[i] = b1 * m[i] + (one - b1) * g[i]
        v[i] = b2 * v[i] + (one - b2) * (g[i] * g[i])
        p[i] -= lr_t * (m[i] / c1_t) / (np.sqrt(v[i] / c2_t) + eps_t)
    return p
