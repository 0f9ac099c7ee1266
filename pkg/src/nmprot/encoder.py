"""Trainable sequence encoder and the frozen embedding store.

The encoder is a small transformer over residue tokens: learned token
embeddings plus a fixed sinusoidal position table, a stack of
multi-head self-attention + feed-forward blocks with residual
connections, and a final projection to the head dimension.  It stands
in for a large pretrained encoder wherever one is unavailable; for real
pretrained embeddings, load an "NMEB" store and skip the encoder.

NMEB binary layout (little-endian): magic "NMEB", version u32 = 1,
record count u64, dimension u32, then per record: id length u16, id
UTF-8 bytes, residue count u32, residue_count x dim float32 row-major.
Exactly one row per residue; no begin/end marker rows.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, MissingEmbedding, ShapeError
from .numcore import (
    Tensor,
    add,
    concat_last,
    constant,
    gather_rows,
    matmul,
    parameter,
    row_block,
    scale,
    softmax_rows,
    tanh,
)
from .seqdata import VOCAB_SIZE

NMEB_MAGIC = b"NMEB"
NMEB_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    out_dim: int = 128
    max_len: int = 550
    vocab: int = VOCAB_SIZE

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ShapeError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )


@dataclass
class EmbeddingMatrix:
    """Per-residue embedding rows for one sequence."""

    values: Tensor  # (length, d)
    id: str = ""

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


def positional_table(max_len, d_model, dtype=np.float32):
    """Fixed sin/cos position encodings, one row per position."""
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    idx = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d_model)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


class _LayerParams:
    def __init__(self, cfg, rng, dtype, prefix):
        dm, dh = cfg.d_model, cfg.d_model // cfg.heads
        self.wq = [
            _uniform_param(rng, (dm, dh), dtype, f"{prefix}.h{h}.wq")
            for h in range(cfg.heads)
        ]
        self.wk = [
            _uniform_param(rng, (dm, dh), dtype, f"{prefix}.h{h}.wk")
            for h in range(cfg.heads)
        ]
        self.wv = [
            _uniform_param(rng, (dm, dh), dtype, f"{prefix}.h{h}.wv")
            for h in range(cfg.heads)
        ]
        self.wo = _uniform_param(rng, (dm, dm), dtype, f"{prefix}.wo")
        self.w1 = _uniform_param(rng, (dm, cfg.ffn_dim), dtype, f"{prefix}.w1")
        self.b1 = parameter(np.zeros(cfg.ffn_dim, dtype=dtype), name=f"{prefix}.b1")
        self.w2 = _uniform_param(rng, (cfg.ffn_dim, dm), dtype, f"{prefix}.w2")
        self.b2 = parameter(np.zeros(cfg.d_model, dtype=dtype), name=f"{prefix}.b2")

    def parameters(self):
        return [*self.wq, *self.wk, *self.wv, self.wo, self.w1, self.b1, self.w2, self.b2]


def _uniform_param(rng, shape, dtype, name):
    bound = 1.0 / math.sqrt(shape[0])
    return parameter(rng.uniform(-bound, bound, size=shape).astype(dtype), name=name)


class EncoderParams:
    """All encoder weights; the position table is fixed, not trained."""

    def __init__(self, cfg=EncoderConfig(), seed=0, dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.tok_emb = _uniform_param(
            rng, (cfg.vocab, cfg.d_model), dtype, "encoder.tok_emb"
        )
        self.pos = constant(positional_table(cfg.max_len, cfg.d_model, dtype))
        self.layers = [
            _LayerParams(cfg, rng, dtype, f"encoder.layer{i}")
            for i in range(cfg.layers)
        ]
        self.w_out = _uniform_param(
            rng, (cfg.d_model, cfg.out_dim), dtype, "encoder.w_out"
        )

    def parameters(self):
        out = [self.tok_emb]
        for lp in self.layers:
            out.extend(lp.parameters())
        out.append(self.w_out)
        return out

    def astype(self, dtype):
        """Copy of these params in another precision (for verification)."""
        clone = EncoderParams.__new__(EncoderParams)
        clone.cfg = self.cfg
        clone.pos = constant(self.pos.data.astype(dtype))
        clone.tok_emb = parameter(self.tok_emb.data.astype(dtype), name=self.tok_emb.name)
        clone.layers = []
        for lp in self.layers:
            lc = _LayerParams.__new__(_LayerParams)
            lc.wq = [parameter(w.data.astype(dtype), name=w.name) for w in lp.wq]
            lc.wk = [parameter(w.data.astype(dtype), name=w.name) for w in lp.wk]
            lc.wv = [parameter(w.data.astype(dtype), name=w.name) for w in lp.wv]
            lc.wo = parameter(lp.wo.data.astype(dtype), name=lp.wo.name)
            lc.w1 = parameter(lp.w1.data.astype(dtype), name=lp.w1.name)
            lc.b1 = parameter(lp.b1.data.astype(dtype), name=lp.b1.name)
            lc.w2 = parameter(lp.w2.data.astype(dtype), name=lp.w2.name)
            lc.b2 = parameter(lp.b2.data.astype(dtype), name=lp.b2.name)
            clone.layers.append(lc)
        clone.w_out = parameter(self.w_out.data.astype(dtype), name=self.w_out.name)
        return clone


def encode_batch(params, token_matrix, mask, tape=None):
    """Encode a padded (B, L) token batch into a (B, L, d) tensor.

    Padded key positions never receive attention, so each sequence's
    rows are bit-identical to what an unpadded encode would produce.
    """
    cfg = params.cfg
    ids = np.asarray(token_matrix)
    if ids.ndim != 2:
        raise ShapeError(f"token matrix must be 2-D, got {ids.shape}")
    if ids.shape[1] > cfg.max_len:
        raise ShapeError(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    key_mask = np.asarray(mask, dtype=bool)[:, None, :]  # (B, 1, L)
    dh = cfg.d_model // cfg.heads
    inv_sqrt_dh = 1.0 / math.sqrt(dh)

    # Token embeddings are scaled up to the position table's O(1) range,
    # otherwise position alone dominates the residual stream.
    x = scale(gather_rows(params.tok_emb, ids, tape), math.sqrt(cfg.d_model), tape)
    x = add(x, Tensor(params.pos.data[: ids.shape[1]]), tape)
    for lp in params.layers:
        heads = []
        for wq, wk, wv in zip(lp.wq, lp.wk, lp.wv):
            q = matmul(x, wq, tape)
            k = matmul(x, wk, tape)
            v = matmul(x, wv, tape)
            s = scale(matmul(q, k, tape, transpose_b=True), inv_sqrt_dh, tape)
            a = softmax_rows(s, mask=key_mask, tape=tape)
            heads.append(matmul(a, v, tape))
        attn = matmul(concat_last(heads, tape), lp.wo, tape)
        x = add(x, attn, tape)
        f = tanh(add(matmul(x, lp.w1, tape), lp.b1, tape), tape)
        x = add(x, add(matmul(f, lp.w2, tape), lp.b2, tape), tape)
    return matmul(x, params.w_out, tape)


def encode(seq, params, trainable=True, tape=None):
    """One sequence -> EmbeddingMatrix with one row per residue.

    With ``trainable=False`` the graph is cut below the embeddings, so
    no gradient ever reaches the encoder weights.
    """
    if seq.length > params.cfg.max_len:
        raise ShapeError(
            f"sequence {seq.id!r} length {seq.length} exceeds max_len {params.cfg.max_len}"
        )
    ids = np.asarray(seq.tokens, dtype=np.int32)[None, :]
    mask = np.ones_like(ids, dtype=bool)
    enc_tape = tape if trainable else None
    out3 = encode_batch(params, ids, mask, enc_tape)
    if trainable and tape is not None:
        values = row_block(out3, 0, seq.length, tape)
    else:
        values = Tensor(out3.data[0])
    return EmbeddingMatrix(values=values, id=seq.id)


# -- frozen embedding store ---------------------------------------------------

class EmbeddingStore:
    """Immutable id -> per-residue embedding mapping loaded from NMEB."""

    def __init__(self, dim, records):
        self.dim = dim
        self._records = dict(records)  # id -> (length, dim) float32 array

    def __len__(self):
        return len(self._records)

    def __contains__(self, seq_id):
        return seq_id in self._records

    def ids(self):
        return list(self._records)

    def lookup(self, seq_id):
        try:
            values = self._records[seq_id]
        except KeyError:
            raise MissingEmbedding(f"id {seq_id!r} not in embedding store") from None
        return EmbeddingMatrix(values=Tensor(values), id=seq_id)

    def items(self):
        return self._records.items()


def write_embedding_store(path, records, dim):
    """Write (id, array) records in order to an NMEB file."""
    with open(path, "wb") as fh:
        fh.write(NMEB_MAGIC)
        fh.write(struct.pack("<IQI", NMEB_VERSION, len(records), dim))
        for seq_id, values in records:
            arr = np.ascontiguousarray(values, dtype="<f4")
            if arr.ndim != 2 or arr.shape[1] != dim:
                raise ShapeError(
                    f"record {seq_id!r} has shape {arr.shape}, want (n, {dim})"
                )
            raw_id = seq_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_id)))
            fh.write(raw_id)
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.tobytes())


def load_embedding_store(path):
    """Read an NMEB file; any structural defect raises FormatError."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated NMEB file while reading {what}")
        piece = blob[off : off + n]
        off += n
        return piece

    off = 0
    if take(4, "magic") != NMEB_MAGIC:
        raise FormatError("bad magic; not an NMEB file")
    version, count, dim = struct.unpack("<IQI", take(16, "header"))
    if version != NMEB_VERSION:
        raise FormatError(f"unsupported NMEB version {version}")
    records = []
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2, "id length"))
        seq_id = take(id_len, "id").decode("utf-8")
        (n_res,) = struct.unpack("<I", take(4, "residue count"))
        payload = take(n_res * dim * 4, f"record {seq_id!r}")
        values = np.frombuffer(payload, dtype="<f4").reshape(n_res, dim).copy()
        records.append((seq_id, values))
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after last record")
    ids = [r[0] for r in records]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate ids in NMEB file")
    return EmbeddingStore(dim, records)
