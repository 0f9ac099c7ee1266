"""Negative sampling and the cross-attention uniformity loss.

A negative is a sequence with a different task label (protein-wise) or
the non-interacting pairs already present in the batch (pair task).
The loss drives the cross-attention of each negative pair toward the
uniform row distribution, so negatives stop aligning residue-to-residue
while the supervised head keeps training through the shared key
projection.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRow, NoNegativesAvailable, ShapeError
from .numcore import Tensor, add, constant, matmul, mse_masked, parameter, scale, softmax_rows


@dataclass(frozen=True)
class NegativeSet:
    anchor_id: str
    negative_ids: tuple


@dataclass
class AttentionMatrix:
    """Row-stochastic attention with validity masks.

    Rows are the query-side residues (the negative sequence), columns
    the key-side residues (the anchor).  Entries at invalid columns are
    exactly zero; every valid row sums to one.
    """

    values: Tensor  # (l, m)
    row_mask: np.ndarray = None  # (l,) bool or None (= all valid)
    col_mask: np.ndarray = None  # (m,) bool or None

    @property
    def shape(self):
        return self.values.shape

    def entry_mask(self):
        """Boolean (l, m) mask of valid entries, or None if everything is."""
        if self.row_mask is None and self.col_mask is None:
            return None
        l, m = self.values.shape
        rows = self.row_mask if self.row_mask is not None else np.ones(l, dtype=bool)
        cols = self.col_mask if self.col_mask is not None else np.ones(m, dtype=bool)
        return np.outer(rows, cols)


class ProjectionParams:
    """The four head projections; the key projection is a single tensor
    shared between cross-attention and self-attention."""

    def __init__(self, dim, key_dim=None, seed=0, dtype=np.float32):
        key_dim = key_dim or dim
        rng = np.random.default_rng(seed)
        # Wider than the encoder's 1/sqrt(fan_in): attention starts with
        # non-trivial logits, so the uniformity pressure on negative
        # pairs is a live constraint rather than a vacuous one.
        bound = 3.0 / math.sqrt(dim)

        def make(name):
            return parameter(
                rng.uniform(-bound, bound, size=(dim, key_dim)).astype(dtype),
                name=name,
            )

        self.w_key = make("proj.w_key")
        self.w_query_neg = make("proj.w_query_neg")
        self.w_query_self = make("proj.w_query_self")
        self.w_value = make("proj.w_value")

    @property
    def key_dim(self):
        return self.w_key.data.shape[1]

    def parameters(self):
        return [self.w_key, self.w_query_neg, self.w_query_self, self.w_value]

    def astype(self, dtype):
        clone = ProjectionParams.__new__(ProjectionParams)
        for attr in ("w_key", "w_query_neg", "w_query_self", "w_value"):
            src = getattr(self, attr)
            setattr(clone, attr, parameter(src.data.astype(dtype), name=src.name))
        return clone


def _values(emb):
    return emb.values if hasattr(emb, "values") else emb


def sample_negatives_wise(index, anchor, n, rng):
    """Draw n ids uniformly from the union of all other-label pools.

    Without replacement when the pool is large enough, with replacement
    otherwise; the anchor itself is never returned.
    """
    pool = []
    for label in sorted(index):
        if label != anchor.label:
            pool.extend(index[label])
    anchor_id = anchor.seq.id
    pool = [pid for pid in pool if pid != anchor_id]
    if not pool:
        raise NoNegativesAvailable(
            f"no example with a label other than {anchor.label} (anchor {anchor_id!r})"
        )
    if n <= 0:
        return NegativeSet(anchor_id=anchor_id, negative_ids=())
    replace = len(pool) < n
    picks = rng.choice(len(pool), size=n, replace=replace)
    return NegativeSet(
        anchor_id=anchor_id,
        negative_ids=tuple(pool[int(i)] for i in picks),
    )


def sample_negatives_pair(batch):
    """The non-interacting (label 0) pairs of a batch, in batch order."""
    return [pair for pair in batch if pair.label == 0]


def cross_attention(e_n, e_g, proj, row_mask=None, col_mask=None,
                    scaled=False, tape=None, k_g=None):
    """Row-stochastic attention of negative residues over anchor residues.

    K = E_g @ W_key, Q = E_n @ W_query_neg, rows = softmax over valid
    anchor columns of Q K^T.  No 1/sqrt(d_k) scaling unless ``scaled``;
    pass a precomputed ``k_g`` to share the anchor's keys across its
    negatives and the self-attention head.
    """
    vn, vg = _values(e_n), _values(e_g)
    d = proj.w_key.data.shape[0]
    if vn.data.shape[-1] != d or vg.data.shape[-1] != d:
        raise ShapeError(
            f"embedding dims {vn.data.shape[-1]}/{vg.data.shape[-1]} != projection dim {d}"
        )
    if k_g is None:
        k_g = matmul(vg, proj.w_key, tape)
    q_n = matmul(vn, proj.w_query_neg, tape)
    scores = matmul(q_n, k_g, tape, transpose_b=True)
    if scaled:
        scores = scale(scores, 1.0 / math.sqrt(proj.key_dim), tape)
    mask = None if col_mask is None else np.asarray(col_mask, dtype=bool)[None, :]
    att = softmax_rows(scores, mask=mask, tape=tape)
    return AttentionMatrix(
        values=att,
        row_mask=None if row_mask is None else np.asarray(row_mask, dtype=bool),
        col_mask=None if col_mask is None else np.asarray(col_mask, dtype=bool),
    )


def uniform_target(row_mask, col_mask, dtype=np.float32):
    """The exact fixed point of masked row-softmax on constant logits.

    Valid entries in valid rows equal 1 / (valid column count); every
    other entry is 0, so rows of the target sum to 1 (or 0 for fully
    padded rows).
    """
    rows = np.asarray(row_mask, dtype=bool)
    cols = np.asarray(col_mask, dtype=bool)
    n_cols = int(cols.sum())
    if n_cols == 0:
        raise DegenerateRow("uniform target with zero valid columns")
    # Divide in the target dtype so the value matches what masked softmax
    # itself produces on constant logits.
    fill = np.asarray(1.0, dtype=dtype) / np.asarray(n_cols, dtype=dtype)
    target = np.where(np.outer(rows, cols), fill, np.asarray(0.0, dtype=dtype))
    return constant(target)


def negative_loss(atts, targets, tape=None):
    """Sum over negatives of MSE(attention, uniform target) on valid entries.

    A plain sum: doubling the negative list doubles the loss.
    """
    if len(atts) != len(targets):
        raise ShapeError(f"{len(atts)} attention matrices vs {len(targets)} targets")
    total = None
    for att, target in zip(atts, targets):
        term = mse_masked(att.values, target, mask=att.entry_mask(), tape=tape)
        total = term if total is None else add(total, term, tape)
    if total is None:
        return constant(np.zeros((), dtype=np.float32))
    return total
