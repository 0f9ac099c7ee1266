"""Model assembly, NMCK checkpoints, and the inference path.

A Model bundles the encoder (or a frozen embedding store), the shared
projection set, and the classifier.  Inference never samples negatives
and never builds cross-attention: encode, self-attend, pool, (concat
for pairs), classify.

NMCK checkpoint layout (little-endian): magic "NMCK", version u32 = 1,
then named tensors until EOF: name length u16, name UTF-8, rank u8,
dims u32 each, float32 data row-major.  The first tensor, "meta.arch",
carries the architecture so a checkpoint reconstructs without a config.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .encoder import EncoderConfig, EncoderParams, encode
from .errors import CheckpointNotFound, FormatError, MissingEmbedding
from .head import ClassifierParams, pair_representation, self_attend_pool
from .negmine import ProjectionParams
from .seqdata import PairExample, TokenSequence

NMCK_MAGIC = b"NMCK"
NMCK_VERSION = 1

ENCODER_MODES = ("scratch", "finetune", "frozen", "store")
TASKS = ("wise", "pair")


@dataclass(frozen=True)
class ModelConfig:
    task: str = "wise"
    class_count: int = 2
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    hidden_dim: int = 128  # projection width d, also the encoder output dim
    max_len: int = 550
    encoder_mode: str = "scratch"
    cross_scaled: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.encoder_mode not in ENCODER_MODES:
            raise ValueError(f"encoder_mode must be one of {ENCODER_MODES}")

    @property
    def classifier_in(self):
        return 2 * self.hidden_dim if self.task == "pair" else self.hidden_dim

    def encoder_config(self):
        return EncoderConfig(
            d_model=self.d_model,
            layers=self.layers,
            heads=self.heads,
            ffn_dim=self.ffn_dim,
            out_dim=self.hidden_dim,
            max_len=self.max_len,
        )


class Model:
    def __init__(self, config, seed=0, dtype=np.float32, store=None):
        self.config = config
        self.store = store
        if config.encoder_mode == "store":
            self.encoder = None
        else:
            self.encoder = EncoderParams(config.encoder_config(), seed=seed, dtype=dtype)
        self.proj = ProjectionParams(config.hidden_dim, seed=seed + 1, dtype=dtype)
        self.cls = ClassifierParams(
            config.class_count, config.classifier_in, seed=seed + 2, dtype=dtype
        )

    @property
    def encoder_trainable(self):
        return self.config.encoder_mode in ("scratch", "finetune")

    def parameters(self):
        """Trainable tensors only; a frozen encoder stays untouched."""
        out = []
        if self.encoder is not None and self.encoder_trainable:
            out.extend(self.encoder.parameters())
        out.extend(self.proj.parameters())
        out.extend(self.cls.parameters())
        return out

    def named_tensors(self):
        """Every persistent tensor (frozen encoders included), by name."""
        out = []
        if self.encoder is not None:
            out.extend(self.encoder.parameters())
        out.extend(self.proj.parameters())
        out.extend(self.cls.parameters())
        return [(t.name, t) for t in out]

    def embed(self, seq, tape=None):
        """EmbeddingMatrix for a TokenSequence, via encoder or store."""
        if self.config.encoder_mode == "store":
            if self.store is None:
                raise MissingEmbedding("model is in store mode but no store is attached")
            return self.store.lookup(seq.id if isinstance(seq, TokenSequence) else seq)
        return encode(seq, self.encoder, trainable=self.encoder_trainable, tape=tape)

    def astype(self, dtype):
        """Precision-converted copy sharing no storage (for verification)."""
        clone = Model.__new__(Model)
        clone.config = self.config
        clone.store = self.store
        clone.encoder = None if self.encoder is None else self.encoder.astype(dtype)
        clone.proj = self.proj.astype(dtype)
        clone.cls = self.cls.astype(dtype)
        return clone

    def snapshot(self):
        """Copies of all persistent tensor arrays, keyed by name."""
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def restore(self, snap):
        for name, t in self.named_tensors():
            t.data[...] = snap[name]


def pooled_representation(model, item, tape=None):
    """Pooled (and for pairs, concatenated) representation of one input."""
    if isinstance(item, PairExample) or (
        isinstance(item, tuple) and len(item) == 2
    ):
        a, b = (item.seq_a, item.seq_b) if isinstance(item, PairExample) else item
        h_a = self_attend_pool(model.embed(a, tape), model.proj, tape=tape)
        h_b = self_attend_pool(model.embed(b, tape), model.proj, tape=tape)
        return pair_representation(h_a, h_b, tape)
    return self_attend_pool(model.embed(item, tape), model.proj, tape=tape)


def predict(item, model):
    """Class and probabilities; a pure function of input and parameters.

    No sampling, no cross-attention, no randomness of any kind; the
    negative-mining machinery is not touched on this path.
    """
    h = pooled_representation(model, item)
    logits = model.cls.w.data @ h.data + model.cls.b.data
    probs = kernels.softmax_rows(np.ascontiguousarray(logits[None, :]))[0]
    return int(np.argmax(probs)), probs


# -- NMCK checkpoints --------------------------------------------------------

def _meta_tensor(config):
    values = [
        float(NMCK_VERSION),
        float(TASKS.index(config.task)),
        float(config.class_count),
        float(config.d_model),
        float(config.layers),
        float(config.heads),
        float(config.ffn_dim),
        float(config.hidden_dim),
        float(config.max_len),
        float(ENCODER_MODES.index(config.encoder_mode)),
        1.0 if config.cross_scaled else 0.0,
    ]
    return np.asarray(values, dtype="<f4")


def _config_from_meta(meta):
    if meta.shape != (11,):
        raise FormatError(f"meta.arch tensor has shape {meta.shape}, want (11,)")
    return ModelConfig(
        task=TASKS[int(meta[1])],
        class_count=int(meta[2]),
        d_model=int(meta[3]),
        layers=int(meta[4]),
        heads=int(meta[5]),
        ffn_dim=int(meta[6]),
        hidden_dim=int(meta[7]),
        max_len=int(meta[8]),
        encoder_mode=ENCODER_MODES[int(meta[9])],
        cross_scaled=bool(meta[10]),
    )


def _write_tensor(fh, name, arr):
    raw = name.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)
    arr = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(arr.tobytes())


def save_checkpoint(path, model):
    """Write the model as f32 tensors; tensor order is reproducible."""
    with open(path, "wb") as fh:
        fh.write(NMCK_MAGIC)
        fh.write(struct.pack("<I", NMCK_VERSION))
        _write_tensor(fh, "meta.arch", _meta_tensor(model.config))
        for name, tensor in model.named_tensors():
            _write_tensor(fh, name, tensor.data)


def read_checkpoint_tensors(path):
    """Raw (name, f32 array) list in file order; FormatError on damage."""
    if not os.path.exists(path):
        raise CheckpointNotFound(f"checkpoint {path} does not exist")
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated checkpoint while reading {what}")
        piece = blob[off : off + n]
        off += n
        return piece

    if take(4, "magic") != NMCK_MAGIC:
        raise FormatError("bad magic; not an NMCK checkpoint")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != NMCK_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    tensors = []
    while off < len(blob):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = [struct.unpack("<I", take(4, "dim"))[0] for _ in range(rank)]
        n = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(n * 4, f"tensor {name!r}"), dtype="<f4")
        tensors.append((name, data.reshape(dims).copy()))
    return tensors


def load_checkpoint(path, store=None, dtype=np.float32):
    """Rebuild a Model from an NMCK file (optionally attaching a store)."""
    tensors = read_checkpoint_tensors(path)
    if not tensors or tensors[0][0] != "meta.arch":
        raise FormatError("checkpoint does not start with meta.arch")
    config = _config_from_meta(tensors[0][1])
    model = Model(config, seed=0, dtype=dtype, store=store)
    by_name = dict(model.named_tensors())
    seen = set()
    for name, data in tensors[1:]:
        if name not in by_name:
            raise FormatError(f"checkpoint tensor {name!r} not part of this model")
        target = by_name[name]
        if target.data.shape != data.shape:
            raise FormatError(
                f"tensor {name!r} shape {data.shape} != model shape {target.data.shape}"
            )
        target.data[...] = data.astype(dtype)
        seen.add(name)
    missing = set(by_name) - seen
    if missing:
        raise FormatError(f"checkpoint is missing tensors: {sorted(missing)}")
    return model
