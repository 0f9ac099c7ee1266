"""FASTA -> NMEB export pipeline.

NMEB layout (little-endian): magic "NMEB", version u32 = 1, record
count u64, dimension u32; per record: id length u16, id UTF-8, residue
count u32, count x dim float32 row-major.  Exactly one row per residue
of the (truncated) sequence; any begin/end marker rows a model emits
are stripped before writing, so row i always describes residue i of the
FASTA record.

The output file is written atomically (temp file + rename).
"""

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, MalformedFasta
from .models import resolve_model

NMEB_MAGIC = b"NMEB"
NMEB_VERSION = 1
DEFAULT_MAX_LEN = 550


@dataclass(frozen=True)
class ExportManifest:
    fasta_path: str
    model_name: str
    out_path: str
    layer: int = -1  # hidden-state index; -1 = final representation layer
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        if not (1 <= self.max_len <= 550):
            raise ValueError(f"max_len must be in [1, 550], got {self.max_len}")


def parse_fasta(text):
    """[(id, sequence)] from FASTA text; ids cut at first whitespace."""
    records = []
    current = None
    chunks = []
    for line in text.split("\n"):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if current is not None:
                records.append((current, "".join(chunks)))
            current = line[1:].split()[0] if len(line) > 1 else ""
            chunks = []
        else:
            if current is None:
                raise MalformedFasta("sequence content before any '>' header")
            chunks.append(line)
    if current is not None:
        records.append((current, "".join(chunks)))
    for rec_id, seq in records:
        if not seq:
            raise MalformedFasta(f"record {rec_id!r} has no sequence")
    return records


def write_store(path, records, dim):
    """Atomically write (id, float32 array) records as an NMEB file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".nmeb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(NMEB_MAGIC)
            fh.write(struct.pack("<IQI", NMEB_VERSION, len(records), dim))
            for rec_id, values in records:
                arr = np.ascontiguousarray(values, dtype="<f4")
                if arr.ndim != 2 or arr.shape[1] != dim:
                    raise AlignmentError(
                        f"record {rec_id!r} has shape {arr.shape}, want (n, {dim})"
                    )
                raw = rec_id.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", arr.shape[0]))
                fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_embeddings(manifest):
    """Run the model over every FASTA record and write the NMEB store.

    Returns (record_count, dimension).
    """
    with open(manifest.fasta_path, "r", encoding="utf-8") as fh:
        fasta = parse_fasta(fh.read())
    model = resolve_model(manifest.model_name, layer=manifest.layer)
    records = []
    for rec_id, seq in fasta:
        cleaned = "".join(seq.split()).upper()[: manifest.max_len]
        rows = model.embed(cleaned)
        if rows.shape != (len(cleaned), model.dim):
            raise AlignmentError(
                f"record {rec_id!r}: got {rows.shape}, want ({len(cleaned)}, {model.dim})"
            )
        records.append((rec_id, rows.astype(np.float32, copy=False)))
    write_store(manifest.out_path, records, model.dim)
    return len(records), model.dim
