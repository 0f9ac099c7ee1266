"""The nm-export command."""

import argparse
import sys

from .errors import ExportError, MalformedFasta, ModelUnavailable
from .export import DEFAULT_MAX_LEN, ExportManifest, export_embeddings


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nm-export",
        description="Export per-residue protein LM embeddings to an NMEB store.",
    )
    parser.add_argument("--fasta", required=True, help="input FASTA file")
    parser.add_argument(
        "--model",
        required=True,
        help="model id: a transformers name (e.g. facebook/esm2_t6_8M_UR50D) "
        "or toy:<dim> for the deterministic offline embedder",
    )
    parser.add_argument("--out", required=True, help="output .nmeb path")
    parser.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    parser.add_argument(
        "--layer", type=int, default=-1,
        help="hidden-state layer to export (-1 = final representation)",
    )
    args = parser.parse_args(argv)

    try:
        manifest = ExportManifest(
            fasta_path=args.fasta,
            model_name=args.model,
            out_path=args.out,
            layer=args.layer,
            max_len=args.max_len,
        )
        count, dim = export_embeddings(manifest)
    except ModelUnavailable as exc:
        print(f"nm-export: {exc}", file=sys.stderr)
        return 4
    except (MalformedFasta, ValueError) as exc:
        print(f"nm-export: {exc}", file=sys.stderr)
        return 2
    except (ExportError, OSError) as exc:
        print(f"nm-export: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records of dimension {dim} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
