"""Dense tensors, a reverse-mode gradient tape, and the differentiable ops.

Design notes:

* A ``Tensor`` wraps a numpy array; parameters are leaf tensors with
  ``requires_grad=True``.  Ops are free functions that optionally record
  a backward closure on an explicit ``GradientTape``.  Passing
  ``tape=None`` evaluates forward only (inference, finite differences).
* Shapes follow numpy: ops accept leading batch dimensions where that is
  cheap (matmul, softmax, pooling), so a whole padded batch can run
  through one recorded op instead of one op per sequence.
* Training runs in float32; gradient verification runs the same graph in
  float64.  The dtype is carried by the tensors, never forced here.
* Reductions are deterministic: no threads, no order-shuffling inside a
  single evaluation, so repeated evaluations produce identical bits.
"""

import os

import numpy as np

from .. import kernels
from ..errors import DegenerateRow, LabelOutOfRange, NumericalError, ShapeError

# Hard-fail on any non-finite op output.  Off by default: training-scale
# runs pay a measurable cost for the scans.
CHECK_FINITE = os.environ.get("NMPROT_DEBUG_FINITE", "") == "1"


class Tensor:
    """A dense real array with autograd bookkeeping."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad else "const")
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"


def parameter(data, name=None):
    """A trainable leaf tensor (copies its input)."""
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


def constant(data, dtype=None):
    """A non-trainable tensor; shares memory with ndarray input."""
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


class GradientTape:
    """Execution-ordered record of ops plus their backward closures."""

    def __init__(self):
        self._nodes = []

    def record(self, out, inputs, backward):
        self._nodes.append((out, inputs, backward))

    def __len__(self):
        return len(self._nodes)

    def gradients(self, loss, params):
        """Gradients of a scalar loss for each tensor in ``params``.

        Parameters absent from the recorded graph get zero gradients.
        A parameter used in several places receives the sum of all its
        contributions.
        """
        if loss.data.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        grads = {id(loss): np.ones((), dtype=loss.data.dtype)}
        for out, inputs, backward in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward(g)):
                if gi is None:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = gi if acc is None else acc + gi
        return [
            grads.get(id(p), np.zeros(p.data.shape, dtype=p.data.dtype))
            for p in params
        ]


def backward(loss, tape, params):
    """Gradient map keyed by parameter identity (tensors hash by id)."""
    return dict(zip(params, tape.gradients(loss, params)))


def _emit(out_data, inputs, backward_fn, tape):
    if CHECK_FINITE and not np.all(np.isfinite(out_data)):
        raise NumericalError("non-finite value produced by an op")
    out = Tensor(out_data)
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic -------------------------------------------------------------

def matmul(a, b, tape=None, transpose_b=False):
    """Matrix product over the last two axes, batch axes broadcast.

    ``transpose_b`` multiplies by b's transpose (its last two axes
    swapped) without materializing it, which is how attention scores
    Q @ K^T are formed.
    """
    da, db = a.data, b.data
    if da.ndim < 2 or db.ndim < 2:
        raise ShapeError("matmul needs at least 2-D operands; reshape vectors first")
    inner_b = db.shape[-1] if transpose_b else db.shape[-2]
    if da.shape[-1] != inner_b:
        raise ShapeError(f"matmul inner dims disagree: {da.shape} x {db.shape}")
    rhs = np.swapaxes(db, -1, -2) if transpose_b else db
    out = da @ rhs

    def bwd(g):
        if transpose_b:
            ga = g @ db
            gb = np.swapaxes(g, -1, -2) @ da
        else:
            ga = g @ np.swapaxes(db, -1, -2)
            gb = np.swapaxes(da, -1, -2) @ g
        return _unbroadcast(ga, da.shape), _unbroadcast(gb, db.shape)

    return _emit(out, (a, b), bwd, tape)


def add(a, b, tape=None):
    """Elementwise sum with numpy broadcasting."""
    da, db = a.data, b.data
    try:
        out = da + db
    except ValueError as exc:
        raise ShapeError(f"add shapes incompatible: {da.shape} + {db.shape}") from exc

    def bwd(g):
        return _unbroadcast(g, da.shape), _unbroadcast(g, db.shape)

    return _emit(out, (a, b), bwd, tape)


def scale(a, c, tape=None):
    """Multiply by a python scalar."""
    c = float(c)
    out = a.data * c

    def bwd(g):
        return (g * c,)

    return _emit(out, (a,), bwd, tape)


def relu(a, tape=None):
    da = a.data
    out = np.maximum(da, 0)

    def bwd(g):
        return (g * (da > 0),)

    return _emit(out, (a,), bwd, tape)


def tanh(a, tape=None):
    """Smooth activation; the encoder uses this so central differences
    stay trustworthy everywhere (ReLU kinks break them)."""
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _emit(out, (a,), bwd, tape)


def reshape(a, shape, tape=None):
    old = a.data.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {shape}") from exc

    def bwd(g):
        return (g.reshape(old),)

    return _emit(out, (a,), bwd, tape)


def sum_all(a, tape=None):
    """Sum of every entry, as a scalar tensor."""
    da = a.data
    out = da.sum()

    def bwd(g):
        return (np.ones_like(da) * g,)

    return _emit(np.asarray(out), (a,), bwd, tape)


# -- structure --------------------------------------------------------------

def gather_rows(table, ids, tape=None):
    """Rows of a (V, d) table selected by an integer id array."""
    dt = table.data
    if dt.ndim != 2:
        raise ShapeError(f"gather table must be 2-D, got {dt.shape}")
    idx = np.asarray(ids)
    out = dt[idx]

    def bwd(g):
        gt = np.zeros_like(dt)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, dt.shape[1]))
        return (gt,)

    return _emit(out, (table,), bwd, tape)


def concat_last(parts, tape=None):
    """Concatenate along the last axis."""
    datas = [p.data for p in parts]
    base = datas[0].shape[:-1]
    if any(d.shape[:-1] != base for d in datas):
        raise ShapeError("concat_last needs matching leading dims")
    out = np.concatenate(datas, axis=-1)
    splits = np.cumsum([d.shape[-1] for d in datas])[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(s) for s in np.split(g, splits, axis=-1))

    return _emit(out, tuple(parts), bwd, tape)


def stack_rows(vecs, tape=None):
    """Stack 1-D tensors of equal length into a matrix."""
    datas = [v.data for v in vecs]
    if any(d.ndim != 1 or d.shape != datas[0].shape for d in datas):
        raise ShapeError("stack_rows needs equal-length vectors")
    out = np.stack(datas, axis=0)

    def bwd(g):
        return tuple(g[i] for i in range(len(datas)))

    return _emit(out, tuple(vecs), bwd, tape)


def row_block(a, index, length, tape=None):
    """The first ``length`` rows of slab ``index`` of a (B, L, d) tensor.

    This is how per-sequence embeddings are cut out of a padded batch.
    """
    da = a.data
    if da.ndim != 3:
        raise ShapeError(f"row_block expects a 3-D tensor, got {da.shape}")
    if not (0 <= index < da.shape[0]) or not (1 <= length <= da.shape[1]):
        raise ShapeError(f"row_block ({index}, {length}) out of bounds for {da.shape}")
    out = da[index, :length]

    def bwd(g):
        ga = np.zeros_like(da)
        ga[index, :length] = g
        return (ga,)

    return _emit(out, (a,), bwd, tape)


# -- attention / pooling ------------------------------------------------------

def softmax_rows(a, mask=None, tape=None):
    """Softmax over the last axis, numerically stabilized per row.

    With a mask (broadcastable bool, True = valid), masked entries come
    out exactly 0 and each row renormalizes over its valid entries.  A
    row with no valid entry raises DegenerateRow.
    """
    da = a.data
    if da.ndim < 1 or da.shape[-1] == 0:
        raise ShapeError(f"softmax needs a non-empty last axis, got {da.shape}")
    cols = da.shape[-1]
    flat = np.ascontiguousarray(da.reshape(-1, cols))
    if mask is None:
        y2 = kernels.softmax_rows(flat)
        mask2 = None
    else:
        mask2 = np.ascontiguousarray(
            np.broadcast_to(np.asarray(mask, dtype=bool), da.shape).reshape(-1, cols)
        )
        if not mask2.any(axis=1).all():
            raise DegenerateRow("softmax row with no valid entries")
        y2 = kernels.masked_softmax_rows(flat, mask2)
    out = y2.reshape(da.shape)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(-1, cols))
        return (kernels.softmax_rows_backward(y2, g2).reshape(da.shape),)

    return _emit(out, (a,), bwd, tape)


def mean_pool_rows(a, row_mask=None, tape=None):
    """Mean over the second-to-last axis, restricted to valid rows."""
    da = a.data
    if da.ndim < 2:
        raise ShapeError(f"mean_pool_rows needs >= 2-D input, got {da.shape}")
    if row_mask is None:
        if da.shape[-2] == 0:
            raise DegenerateRow("mean pool over zero rows")
        out = da.mean(axis=-2)
        inv = np.asarray(1.0 / da.shape[-2], dtype=da.dtype)

        def bwd(g):
            return (np.broadcast_to(g[..., None, :] * inv, da.shape).copy(),)

        return _emit(out, (a,), bwd, tape)

    m = np.broadcast_to(np.asarray(row_mask, dtype=bool), da.shape[:-1])
    counts = m.sum(axis=-1)
    if not np.all(counts > 0):
        raise DegenerateRow("mean pool with zero valid rows")
    w = (m / counts[..., None]).astype(da.dtype)
    out = np.einsum("...m,...md->...d", w, da)

    def bwd(g):
        return (w[..., None] * g[..., None, :],)

    return _emit(out, (a,), bwd, tape)


# -- losses -------------------------------------------------------------------

def cross_entropy_logits(logits, labels, tape=None):
    """Mean cross entropy between softmax(logits) and integer labels.

    Accepts a (C,) vector with a scalar label or a (B, C) matrix with a
    (B,) label vector; uses the log-sum-exp form throughout.
    """
    z = logits.data
    squeeze = z.ndim == 1
    z2 = z.reshape(1, -1) if squeeze else z
    if z2.ndim != 2:
        raise ShapeError(f"logits must be 1-D or 2-D, got {z.shape}")
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.shape != (z2.shape[0],):
        raise ShapeError(f"labels shape {y.shape} mismatches logits {z.shape}")
    c = z2.shape[1]
    if np.any(y < 0) or np.any(y >= c):
        raise LabelOutOfRange(f"label outside [0, {c})")
    mx = z2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z2 - mx).sum(axis=1)) + mx[:, 0]
    picked = z2[np.arange(len(y)), y]
    out = np.asarray((lse - picked).mean(), dtype=z.dtype)

    def bwd(g):
        p = kernels.softmax_rows(np.ascontiguousarray(z2))
        p[np.arange(len(y)), y] -= 1.0
        gz = p * (g / len(y))
        return (gz.reshape(z.shape).astype(z.dtype, copy=False),)

    return _emit(out, (logits,), bwd, tape)


def mse_masked(a, target, mask=None, tape=None):
    """Mean squared error against a constant target, over valid entries.

    The sum runs over the mask-compressed values, so padding appended to
    either axis leaves the result bit-identical.
    """
    da = a.data
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != da.shape:
        raise ShapeError(f"mse target shape {t.shape} != {da.shape}")
    if mask is None:
        diff = da - t
        count = da.size
        if count == 0:
            raise DegenerateRow("mse over zero entries")
        out = np.asarray((diff * diff).sum() / count, dtype=da.dtype)

        def bwd(g):
            return (diff * (2.0 * g / count), None)

    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), da.shape)
        count = int(m.sum())
        if count == 0:
            raise DegenerateRow("mse with empty mask")
        vals = da[m] - t[m]
        out = np.asarray((vals * vals).sum() / count, dtype=da.dtype)

        def bwd(g):
            full = np.where(m, da - t, 0)
            return (full * (2.0 * g / count), None)

    return _emit(out, (a, target if isinstance(target, Tensor) else Tensor(t)), bwd, tape)
