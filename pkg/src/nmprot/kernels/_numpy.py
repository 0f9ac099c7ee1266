"""Pure-numpy reference kernels.

Every function here has a numba twin in ``_numba.py`` with identical
semantics; the twins agree to floating-point roundoff, not bit-for-bit.
All 2-D inputs are C-contiguous; row masks are guaranteed by callers to
have at least one True per row.
"""

import numpy as np


def softmax_rows(x):
    """Row softmax with per-row max subtraction."""
    mx = x.max(axis=1, keepdims=True)
    e = np.exp(x - mx)
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_rows(x, mask):
    """Row softmax over mask-true columns; masked entries are exactly 0."""
    z = np.where(mask, x, -np.inf)
    mx = z.max(axis=1, keepdims=True)
    e = np.exp(z - mx)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(y, gy):
    """Backprop through row softmax: y * (gy - sum(gy * y)) per row.

    Masked entries carry y == 0 and therefore a zero gradient.
    """
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place bias-corrected Adam update on flat views.

    c1 = 1 - beta1**t and c2 = 1 - beta2**t are precomputed in float64 by
    the caller so both backends share the same correction terms.
    """
    m[:] = beta1 * m + (1.0 - beta1) * g
    v[:] = beta2 * v + (1.0 - beta2) * (g * g)
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
