"""Command-line surface.

Exit codes: 0 success, 2 parse/config error, 3 numerical error,
4 missing resource.  Every failure prints a one-line diagnostic to
stderr.
"""

import argparse
import sys

import numpy as np

from . import errors
from .config import load_config
from .export import export_attention
from .gradcheck import run_suite
from .model import load_checkpoint
from .negmine import sample_negatives_wise
from .seqdata import parse_fasta, tokenize
from .trainer import (
    evaluate,
    load_task_data,
    scratch_vs_pretrained,
    sweep_negative_counts,
    train,
)

GRADCHECK_TOLERANCE = 1e-4

_EXIT_CODES = (
    (errors.ParseError, 2),
    (errors.FormatError, 2),
    (errors.ConfigError, 2),
    ((errors.ShapeError, errors.DegenerateRow, errors.NumericalError), 3),
    (
        (
            errors.NoNegativesAvailable,
            errors.MissingEmbedding,
            errors.CheckpointNotFound,
            FileNotFoundError,
        ),
        4,
    ),
)


def _exit_code(exc):
    for types, code in _EXIT_CODES:
        if isinstance(exc, types):
            return code
    return 1


def _load_sequences(data_dir, max_len):
    path = f"{data_dir}/sequences.fasta"
    with open(path, "rb") as fh:
        records = parse_fasta(fh.read())
    return {rid: tokenize(raw, max_len=max_len, seq_id=rid) for rid, raw in records}


def _load_eval_data(model, data, seed):
    """Test split for `eval`/`attn`: a data directory or a builtin name."""
    from .synth import motif_pair, motif_wise

    if data == "motif_wise":
        return motif_wise(seed)[2]
    if data == "motif_pair":
        return motif_pair(seed)[2]
    from .trainer import TrainConfig

    cfg = TrainConfig(
        task=model.config.task,
        class_count=model.config.class_count,
        max_len=model.config.max_len,
        data_dir=data,
    )
    return load_task_data(cfg)[2]


def _cmd_train(args):
    config = load_config(args.config)
    model, log = train(config)
    sys.stdout.write(log.to_tsv())
    if config.checkpoint_path:
        print(f"checkpoint written to {config.checkpoint_path}", file=sys.stderr)
    return 0


def _cmd_eval(args):
    store = None
    if args.store:
        from .encoder import load_embedding_store

        store = load_embedding_store(args.store)
    model = load_checkpoint(args.model, store=store)
    dataset = _load_eval_data(model, args.data, args.seed)
    acc = evaluate(model, dataset)
    print(f"accuracy\t{acc!r}")
    return 0


def _cmd_gradcheck(args):
    result = run_suite(instances=args.instances, seed=args.seed)
    for kind in sorted(result.max_errors):
        print(f"{kind}\tmax_rel_error\t{result.max_errors[kind]:.3e}")
    print(f"overall\tmax_rel_error\t{result.overall:.3e}")
    print(f"instances\t{result.instances}\tseconds\t{result.seconds:.1f}")
    if result.overall > GRADCHECK_TOLERANCE:
        print(
            f"gradcheck FAILED: {result.overall:.3e} > {GRADCHECK_TOLERANCE:.0e}",
            file=sys.stderr,
        )
        return 3
    return 0


def _cmd_sweep(args):
    config = load_config(args.config)
    ns = [int(n) for n in args.negatives.split(",") if n.strip()]
    rows = sweep_negative_counts(config, ns, n_seeds=args.seeds)
    for n, mean_acc, std in rows:
        print(f"{n}\t{mean_acc!r}\t{std!r}")
    return 0


def _cmd_ablation(args):
    config = load_config(args.config)
    rows = scratch_vs_pretrained(config)
    acc = {}
    for regime, classifier, accuracy in rows:
        acc[(regime, classifier)] = accuracy
        print(f"{regime}\t{classifier}\t{accuracy!r}")
    for regime in ("scratch", "finetune"):
        delta = acc[(regime, "NM")] - acc[(regime, "plain")]
        print(f"delta\t{regime}\t{delta!r}")
    return 0


def _cmd_attn(args):
    store = None
    if args.store:
        from .encoder import load_embedding_store

        store = load_embedding_store(args.store)
    model = load_checkpoint(args.model, store=store)
    sequences = None
    if args.data:
        sequences = _load_sequences(args.data, model.config.max_len)
    result = export_attention(
        model, args.a, args.b, args.out, sequences=sequences, k=args.k
    )
    print(f"wrote attention exports to {args.out}")
    for chain in ("a", "b"):
        tops = ", ".join(
            f"{idx}:{score:.4f}" for idx, score in result[f"top_{chain}"]
        )
        print(f"top{args.k}_{chain}\t{tops}")
    return 0


def _cmd_sample(args):
    config = load_config(args.config)
    train_set = load_task_data(config)[0]
    if config.task != "wise":
        print("sample: negative auditing applies to the wise task", file=sys.stderr)
        return 2
    by_id = {ex.seq.id: ex for ex in train_set}
    if args.anchor not in by_id:
        raise errors.UnknownId(f"anchor id {args.anchor!r} not in the training split")
    label_index = {}
    for ex in train_set:
        label_index.setdefault(ex.label, []).append(ex.seq.id)
    rng = np.random.default_rng(config.seed)
    negset = sample_negatives_wise(
        label_index, by_id[args.anchor], config.negatives, rng
    )
    print(f"anchor\t{negset.anchor_id}")
    for nid in negset.negative_ids:
        print(f"negative\t{nid}\tlabel\t{by_id[nid].label}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nmprot",
        description="Train and inspect negative-mining protein classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train per a config file, emit metrics TSV")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a test split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="data dir or motif_wise/motif_pair")
    p.add_argument("--store", default="", help="NMEB store for store-mode models")
    p.add_argument("--seed", type=int, default=0, help="seed for builtin datasets")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("sweep", help="accuracy vs negative count")
    p.add_argument("--config", required=True)
    p.add_argument("--negatives", required=True, help="comma list, e.g. 1,2,4,8")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("ablation", help="scratch vs pretrained, plain vs NM")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_ablation)

    p = sub.add_parser("attn", help="export cross-attention and response scores")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True, help="key-side sequence id")
    p.add_argument("--b", required=True, help="query-side sequence id")
    p.add_argument("--out", required=True)
    p.add_argument("--data", default="", help="directory holding sequences.fasta")
    p.add_argument("--store", default="")
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(fn=_cmd_attn)

    p = sub.add_parser("sample", help="audit one anchor's negative draw")
    p.add_argument("--config", required=True)
    p.add_argument("--anchor", required=True)
    p.set_defaults(fn=_cmd_sample)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single choke point for exit codes
        print(f"nmprot {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
