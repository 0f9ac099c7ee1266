"""Training loops, evaluation, checkpointing, and the ablation sweeps.

One training step: encode every sequence the batch touches (anchors,
pair partners, sampled negatives) as one padded batch, slice out
per-sequence embeddings, build the supervised loss through the
shared-key self-attention head and the uniformity loss over the
negatives' cross-attention, then take one Adam step on the sum.

Determinism: all randomness flows from the config seed through three
independent streams (shuffling, negative sampling, synthetic data), so
a fixed seed reproduces the metrics log bit for bit.
"""

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import encode_batch, load_embedding_store
from .errors import (
    CheckpointNotFound,
    NumericalError,
    ParseError,
    UnknownId,
)
from .head import batch_logits, pair_representation, self_attend_pool, total_loss
from .model import Model, ModelConfig, load_checkpoint, predict, save_checkpoint
from .negmine import (
    cross_attention,
    negative_loss,
    sample_negatives_pair,
    sample_negatives_wise,
    uniform_target,
)
from .numcore import (
    AdamState,
    GradientTape,
    Tensor,
    adam_step,
    add,
    constant,
    cross_entropy_logits,
    matmul,
    row_block,
    scale,
    stack_rows,
)
from .seqdata import (
    LabeledExample,
    PairExample,
    parse_fasta,
    parse_label_table,
    parse_pair_table,
    tokenize,
)
from .synth import motif_pair, motif_wise


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; mirrors the config-file keys one to one."""

    task: str = "wise"
    dataset: str = "files"  # files | motif_wise | motif_pair
    data_dir: str = ""
    class_count: int = 2
    batch_size: int = 16
    epochs: int = 30
    learning_rate: float = 1e-3
    negatives: int = 4
    lambda_: float = 1.0  # config key: lambda
    encoder_mode: str = "scratch"
    max_len: int = 550
    seed: int = 0
    precision: str = "f32"  # f32 | f64
    checkpoint_path: str = ""
    pretrained_path: str = ""
    store_path: str = ""
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    hidden_dim: int = 128
    cross_scaled: bool = False

    def model_config(self):
        return ModelConfig(
            task=self.task,
            class_count=self.class_count,
            d_model=self.d_model,
            layers=self.layers,
            heads=self.heads,
            ffn_dim=self.ffn_dim,
            hidden_dim=self.hidden_dim,
            max_len=self.max_len,
            encoder_mode=self.encoder_mode,
            cross_scaled=self.cross_scaled,
        )

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss_s: float
    loss_n: float
    loss_total: float
    val_acc: float
    seconds: float  # wall clock; not part of the emitted TSV


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def to_tsv(self):
        lines = [
            f"{r.epoch}\t{r.loss_s!r}\t{r.loss_n!r}\t{r.loss_total!r}\t{r.val_acc!r}"
            for r in self.rows
        ]
        return "\n".join(lines) + ("\n" if lines else "")


# -- dataset loading -----------------------------------------------------------

def motif_preset(task="wise"):
    """Calibrated configs for the bundled synthetic benchmark.

    Small enough that a full negative-count sweep runs in minutes on one
    CPU, while the negative-mining head still shows its directional gain
    over the plain head.
    """
    common = dict(
        class_count=2,
        batch_size=16,
        negatives=4,
        lambda_=1.0,
        encoder_mode="scratch",
        max_len=64,
        seed=0,
        d_model=32,
        layers=1,
        heads=2,
        ffn_dim=64,
        hidden_dim=32,
    )
    if task == "wise":
        return TrainConfig(
            task="wise", dataset="motif_wise", epochs=20, learning_rate=2e-3, **common
        )
    return TrainConfig(
        task="pair", dataset="motif_pair", epochs=30, learning_rate=3e-3, **common
    )


def load_task_data(config):
    """(train, val, test) example lists per the config's dataset field."""
    if config.dataset == "motif_wise":
        return motif_wise(config.seed)
    if config.dataset == "motif_pair":
        return motif_pair(config.seed)
    if config.dataset != "files":
        raise ParseError(f"unknown dataset kind {config.dataset!r}")
    root = Path(config.data_dir)
    fasta = (root / "sequences.fasta").read_bytes()
    seqs = {
        rec_id: tokenize(raw, max_len=config.max_len, seq_id=rec_id)
        for rec_id, raw in parse_fasta(fasta)
    }

    def resolve(rec_id):
        if rec_id not in seqs:
            raise UnknownId(f"id {rec_id!r} not present in sequences.fasta")
        return seqs[rec_id]

    splits = []
    if config.task == "wise":
        for name in ("train.tsv", "valid.tsv", "test.tsv"):
            rows = parse_label_table((root / name).read_bytes(), config.class_count)
            splits.append(
                [LabeledExample(seq=resolve(i), label=y) for i, y in rows]
            )
    else:
        for name in ("train_pairs.tsv", "valid_pairs.tsv", "test_pairs.tsv"):
            rows = parse_pair_table((root / name).read_bytes())
            splits.append(
                [
                    PairExample(seq_a=resolve(a), seq_b=resolve(b), label=y)
                    for a, b, y in rows
                ]
            )
    return tuple(splits)


def build_model(config):
    """Model per the encoder mode, loading checkpoints/stores as needed."""
    store = None
    if config.encoder_mode == "store":
        store = load_embedding_store(config.store_path)
        if store.dim != config.hidden_dim:
            raise ParseError(
                f"store dimension {store.dim} != hidden_dim {config.hidden_dim}"
            )
        return Model(config.model_config(), seed=config.seed, dtype=config.dtype, store=store)
    if config.encoder_mode == "frozen" and not config.pretrained_path:
        # Frozen random features: a fresh seeded encoder that never trains.
        return Model(config.model_config(), seed=config.seed, dtype=config.dtype)
    if config.encoder_mode in ("finetune", "frozen"):
        if not config.pretrained_path:
            raise CheckpointNotFound("finetune mode needs pretrained_path")
        model = load_checkpoint(config.pretrained_path, dtype=config.dtype)
        model.config = dataclasses.replace(
            model.config, encoder_mode=config.encoder_mode
        )
        if model.config.task != config.task or model.config.class_count != config.class_count:
            raise ParseError("pretrained checkpoint task/classes mismatch the config")
        return model
    return Model(config.model_config(), seed=config.seed, dtype=config.dtype)


# -- batching helpers ----------------------------------------------------------

class _SeqBank:
    """Unique sequences of one step, padded once, sliced per use."""

    def __init__(self):
        self.seqs = []
        self.index = {}

    def register(self, seq):
        slot = self.index.get(seq.id)
        if slot is None:
            slot = len(self.seqs)
            self.index[seq.id] = slot
            self.seqs.append(seq)
        return slot

    def encode_all(self, model, tape):
        width = max(s.length for s in self.seqs)
        ids = np.zeros((len(self.seqs), width), dtype=np.int32)
        mask = np.zeros((len(self.seqs), width), dtype=bool)
        for i, s in enumerate(self.seqs):
            ids[i, : s.length] = s.tokens
            mask[i, : s.length] = True
        if model.config.encoder_mode == "store":
            d = model.store.dim
            data = np.zeros((len(self.seqs), width, d), dtype=model.proj.w_key.dtype)
            for i, s in enumerate(self.seqs):
                data[i, : s.length] = model.store.lookup(s.id).values.data
            return Tensor(data)
        out = encode_batch(
            model.encoder, ids, mask, tape if model.encoder_trainable else None
        )
        if not model.encoder_trainable:
            out = Tensor(out.data)
        return out

    def slice(self, emb3, seq, tape):
        return row_block(emb3, self.index[seq.id], seq.length, tape)


def _mean_terms(terms, tape, dtype):
    if not terms:
        return constant(np.zeros((), dtype=dtype))
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term, tape)
    if len(terms) > 1:
        total = scale(total, 1.0 / len(terms), tape)
    return total


def _step_wise(model, batch, id_to_example, label_index, config, sample_rng, sampler_calls):
    tape = GradientTape()
    use_neg = config.lambda_ != 0.0 and config.negatives > 0
    negsets = []
    if use_neg:
        for ex in batch:
            sampler_calls[0] += 1
            negsets.append(
                sample_negatives_wise(label_index, ex, config.negatives, sample_rng)
            )
    bank = _SeqBank()
    for ex in batch:
        bank.register(ex.seq)
    if use_neg:
        for ns in negsets:
            for nid in ns.negative_ids:
                bank.register(id_to_example[nid].seq)
    emb3 = bank.encode_all(model, tape)

    h_rows = []
    ln_terms = []
    for i, ex in enumerate(batch):
        e_g = bank.slice(emb3, ex.seq, tape)
        k_g = matmul(e_g, model.proj.w_key, tape)
        h_rows.append(self_attend_pool(e_g, model.proj, tape=tape, k_g=k_g))
        if use_neg:
            atts, targets = [], []
            for nid in negsets[i].negative_ids:
                nseq = id_to_example[nid].seq
                e_n = bank.slice(emb3, nseq, tape)
                att = cross_attention(
                    e_n, e_g, model.proj,
                    scaled=config.cross_scaled, tape=tape, k_g=k_g,
                )
                atts.append(att)
                targets.append(
                    uniform_target(
                        np.ones(nseq.length, dtype=bool),
                        np.ones(ex.seq.length, dtype=bool),
                        dtype=config.dtype,
                    )
                )
            ln_terms.append(negative_loss(atts, targets, tape))
    h = stack_rows(h_rows, tape)
    logits = batch_logits(h, model.cls, tape)
    labels = np.array([ex.label for ex in batch], dtype=np.int64)
    l_s = cross_entropy_logits(logits, labels, tape)
    l_n = _mean_terms(ln_terms, tape, config.dtype)
    bundle = total_loss(l_s, l_n, lam=config.lambda_, tape=tape)
    return bundle, tape


def _step_pair(model, batch, config, sampler_calls):
    tape = GradientTape()
    use_neg = config.lambda_ != 0.0 and config.negatives > 0
    bank = _SeqBank()
    for pair in batch:
        bank.register(pair.seq_a)
        bank.register(pair.seq_b)
    emb3 = bank.encode_all(model, tape)

    h_rows = []
    keys = {}
    for pair in batch:
        halves = []
        for seq in (pair.seq_a, pair.seq_b):
            if seq.id not in keys:
                e = bank.slice(emb3, seq, tape)
                k = matmul(e, model.proj.w_key, tape)
                keys[seq.id] = (e, k)
            e, k = keys[seq.id]
            halves.append(self_attend_pool(e, model.proj, tape=tape, k_g=k))
        h_rows.append(pair_representation(halves[0], halves[1], tape))

    ln_terms = []
    if use_neg:
        sampler_calls[0] += 1
        for pair in sample_negatives_pair(batch):
            e_a, k_a = keys[pair.seq_a.id]
            e_b, _ = keys[pair.seq_b.id]
            att = cross_attention(
                e_b, e_a, model.proj,
                scaled=config.cross_scaled, tape=tape, k_g=k_a,
            )
            target = uniform_target(
                np.ones(pair.seq_b.length, dtype=bool),
                np.ones(pair.seq_a.length, dtype=bool),
                dtype=config.dtype,
            )
            ln_terms.append(negative_loss([att], [target], tape))

    h = stack_rows(h_rows, tape)
    logits = batch_logits(h, model.cls, tape)
    labels = np.array([p.label for p in batch], dtype=np.int64)
    l_s = cross_entropy_logits(logits, labels, tape)
    l_n = _mean_terms(ln_terms, tape, config.dtype)
    bundle = total_loss(l_s, l_n, lam=config.lambda_, tape=tape)
    return bundle, tape


def train(config, data=None, sampler_calls=None):
    """Full training run; returns (model, MetricsLog).

    ``data`` is (train, val) or (train, val, test); defaults to the
    config's dataset.  ``sampler_calls`` is an optional one-element list
    incremented on every negative-sampler invocation (instrumentation).
    """
    if data is None:
        data = load_task_data(config)
    train_set, val_set = data[0], data[1]
    if not train_set:
        raise ParseError("empty training set")
    if sampler_calls is None:
        sampler_calls = [0]

    model = build_model(config)
    params = model.parameters()
    state = AdamState.for_params(params, lr=config.learning_rate)

    shuffle_ss, sample_ss, _ = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    sample_rng = np.random.default_rng(sample_ss)

    id_to_example = {}
    label_index = {}
    if config.task == "wise":
        for ex in train_set:
            id_to_example[ex.seq.id] = ex
            label_index.setdefault(ex.label, []).append(ex.seq.id)

    log = MetricsLog()
    best_acc = -1.0
    best_snap = None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            if config.task == "wise":
                bundle, tape = _step_wise(
                    model, batch, id_to_example, label_index, config,
                    sample_rng, sampler_calls,
                )
            else:
                bundle, tape = _step_pair(model, batch, config, sampler_calls)
            if not np.isfinite(bundle.total.data):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            grads = tape.gradients(bundle.total, params)
            adam_step(params, grads, state)
            sums += [
                float(bundle.supervised.data),
                float(bundle.negative.data),
                float(bundle.total.data),
            ]
            n_batches += 1
        val_acc = evaluate(model, val_set)
        log.append(
            EpochMetrics(
                epoch=epoch,
                loss_s=float(sums[0] / n_batches),
                loss_n=float(sums[1] / n_batches),
                loss_total=float(sums[2] / n_batches),
                val_acc=float(val_acc),
                seconds=time.perf_counter() - t0,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_snap = model.snapshot()
    if best_snap is not None:
        model.restore(best_snap)
    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, model)
    return model, log


def evaluate(model, dataset):
    """Accuracy of argmax predictions over a labeled dataset."""
    if not dataset:
        return 0.0
    correct = 0
    for item in dataset:
        label = item.label
        pred, _ = predict(item if isinstance(item, PairExample) else item.seq, model)
        correct += int(pred == label)
    return correct / len(dataset)


def sweep_negative_counts(config, ns, n_seeds=3, data_for_seed=None):
    """Train/evaluate per (N, seed); rows of (N, mean test acc, std).

    ``data_for_seed(seed)`` overrides dataset construction (the default
    regenerates/reloads per the config with that seed).
    """
    if not ns:
        raise ValueError("ns must be non-empty")
    rows = []
    for n in ns:
        accs = []
        for k in range(n_seeds):
            seed = config.seed + k
            run_cfg = dataclasses.replace(config, negatives=n, seed=seed)
            data = data_for_seed(seed) if data_for_seed else load_task_data(run_cfg)
            model, _ = train(run_cfg, data=data[:2])
            accs.append(evaluate(model, data[2]))
        rows.append((n, float(np.mean(accs)), float(np.std(accs))))
    return rows


def scratch_vs_pretrained(config):
    """2x2 grid: {scratch, finetune} x {plain (lambda=0), NM (lambda=1)}.

    Finetuning starts from config.pretrained_path and raises
    CheckpointNotFound when that file is absent.
    """
    if not config.pretrained_path or not Path(config.pretrained_path).exists():
        raise CheckpointNotFound(
            f"pretrained checkpoint {config.pretrained_path!r} not found"
        )
    data = load_task_data(config)
    rows = []
    for regime in ("scratch", "finetune"):
        for lam, name in ((0.0, "plain"), (1.0, "NM")):
            run_cfg = dataclasses.replace(
                config, encoder_mode=regime, lambda_=lam, seed=config.seed
            )
            model, _ = train(run_cfg, data=data[:2])
            rows.append((regime, name, evaluate(model, data[2])))
    return rows
