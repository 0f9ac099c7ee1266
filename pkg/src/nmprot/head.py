"""Supervised pathway: shared-key self-attention, pooling, classifier,
pair concatenation, the combined loss, and per-residue response scores.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .numcore import (
    Tensor,
    add,
    concat_last,
    constant,
    cross_entropy_logits,
    matmul,
    mean_pool_rows,
    parameter,
    reshape,
    scale,
    softmax_rows,
)


class ClassifierParams:
    """Single affine layer logits = W h + b."""

    def __init__(self, class_count, in_dim, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(in_dim)
        self.w = parameter(
            rng.uniform(-bound, bound, size=(class_count, in_dim)).astype(dtype),
            name="cls.w",
        )
        self.b = parameter(np.zeros(class_count, dtype=dtype), name="cls.b")

    @property
    def class_count(self):
        return self.w.data.shape[0]

    @property
    def in_dim(self):
        return self.w.data.shape[1]

    def parameters(self):
        return [self.w, self.b]

    def astype(self, dtype):
        clone = ClassifierParams.__new__(ClassifierParams)
        clone.w = parameter(self.w.data.astype(dtype), name="cls.w")
        clone.b = parameter(self.b.data.astype(dtype), name="cls.b")
        return clone


@dataclass
class LossBundle:
    supervised: Tensor
    negative: Tensor
    total: Tensor


def _values(emb):
    return emb.values if hasattr(emb, "values") else emb


def self_attend_pool(e_g, proj, mask=None, tape=None, k_g=None):
    """Pooled sequence representation via shared-key self-attention.

    softmax(Q K^T / sqrt(d_k)) V, mean-pooled over valid rows.  K uses
    the same W_key tensor the cross-attention loss trains; pass a
    precomputed k_g to share the product itself.
    """
    v = _values(e_g)
    if v.data.ndim != 2 or v.data.shape[0] < 1:
        raise ShapeError(f"expected (m, d) embeddings, got {v.data.shape}")
    if k_g is None:
        k_g = matmul(v, proj.w_key, tape)
    q_g = matmul(v, proj.w_query_self, tape)
    v_g = matmul(v, proj.w_value, tape)
    scores = scale(matmul(q_g, k_g, tape, transpose_b=True), 1.0 / math.sqrt(proj.key_dim), tape)
    key_mask = None if mask is None else np.asarray(mask, dtype=bool)[None, :]
    att = softmax_rows(scores, mask=key_mask, tape=tape)
    hidden = matmul(att, v_g, tape)
    row_mask = None if mask is None else np.asarray(mask, dtype=bool)
    return mean_pool_rows(hidden, row_mask=row_mask, tape=tape)


def batch_logits(h, params, tape=None):
    """Affine logits for a (B, in_dim) batch of pooled representations."""
    logits = matmul(h, params.w, tape, transpose_b=True)
    return add(logits, params.b, tape)


def classify_and_loss(h, params, y, tape=None):
    """Logits and stable cross-entropy loss for one representation."""
    hv = _values(h)
    if hv.data.ndim != 1:
        raise ShapeError(f"expected a 1-D representation, got {hv.data.shape}")
    if hv.data.shape[0] != params.in_dim:
        raise ShapeError(
            f"representation width {hv.data.shape[0]} != classifier input {params.in_dim}"
        )
    h2 = reshape(hv, (1, hv.data.shape[0]), tape)
    logits = reshape(batch_logits(h2, params, tape), (params.class_count,), tape)
    loss = cross_entropy_logits(logits, y, tape)
    return logits, loss


def pair_representation(h_a, h_b, tape=None):
    """Ordered concatenation (A first) of two pooled representations."""
    va, vb = _values(h_a), _values(h_b)
    if va.data.shape != vb.data.shape or va.data.ndim != 1:
        raise ShapeError(f"pair halves must be equal-length vectors, got {va.data.shape} and {vb.data.shape}")
    return concat_last([va, vb], tape)


def total_loss(l_s, l_n, lam=1.0, tape=None):
    """L_total = L_S + lambda * L_N; lambda=0 is the plain-classifier ablation."""
    if not isinstance(l_n, Tensor):
        l_n = constant(np.asarray(l_n, dtype=l_s.data.dtype))
    if not np.isfinite(l_s.data) or not np.isfinite(l_n.data):
        raise NumericalError(f"non-finite loss inputs: L_S={l_s.data}, L_N={l_n.data}")
    if lam == 1.0:
        total = add(l_s, l_n, tape)
    else:
        total = add(l_s, scale(l_n, lam, tape), tape)
    return LossBundle(supervised=l_s, negative=l_n, total=total)


def response_scores(att):
    """Per-key-residue mean received attention.

    score[j] = mean over valid query rows of att[row, j]; nonnegative and
    summing to 1 over valid key residues.
    """
    values = _values(att)
    m = values.data if isinstance(values, Tensor) else np.asarray(values)
    row_mask = getattr(att, "row_mask", None)
    if row_mask is None:
        return m.mean(axis=0)
    rows = np.asarray(row_mask, dtype=bool)
    count = int(rows.sum())
    if count == 0:
        return np.zeros(m.shape[1], dtype=m.dtype)
    return m[rows].sum(axis=0) / count


def top_k_residues(scores, k):
    """The k highest-scoring residues, ties broken by lowest index.

    k larger than the residue count is clipped.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores)
    k = min(k, scores.shape[0])
    order = np.argsort(-scores, kind="stable")[:k]
    return [(int(i), float(scores[i])) for i in order]
