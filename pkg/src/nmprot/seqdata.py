"""Residue alphabet, tokenization, dataset file parsing, batch assembly.

Everything here is a pure function over immutable inputs; no global
state, safe under concurrent callers.

File formats:
  FASTA        '>'-headed records, UTF-8, id = header up to first space.
  label table  "id<TAB>label" per line, labels in [0, class_count).
  pair table   "id_a<TAB>id_b<TAB>{0|1}" per line, 1 = interaction.
All text files use '\\n' endings; the trailing newline is optional.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, LabelOutOfRange, MalformedFasta, ParseError

# Code 0 is padding.  Codes 1-20 are the canonical residues in the
# classic substitution-matrix order (alphabetical by amino-acid name);
# 21-24 are the ambiguity/rare letters B, Z, U, O; 25 folds every other
# letter to X.
CANONICAL = "ARNDCQEGHILKMFPSTWYV"
EXTENDED = "BZUO"
PAD_CODE = 0
X_CODE = 25
VOCAB_SIZE = 26

_CODE_OF = {ch: i + 1 for i, ch in enumerate(CANONICAL)}
_CODE_OF.update({ch: 21 + i for i, ch in enumerate(EXTENDED)})
_LETTER_OF = {code: ch for ch, code in _CODE_OF.items()}
_LETTER_OF[X_CODE] = "X"

DEFAULT_MAX_LEN = 550


@dataclass(frozen=True)
class TokenSequence:
    """Integer-encoded residues; codes in [1, 25], never the pad code."""

    id: str
    tokens: tuple

    @property
    def length(self):
        return len(self.tokens)


@dataclass(frozen=True)
class LabeledExample:
    seq: TokenSequence
    label: int


@dataclass(frozen=True)
class PairExample:
    seq_a: TokenSequence
    seq_b: TokenSequence
    label: int


@dataclass(frozen=True)
class Batch:
    """Left-aligned padded token matrix plus validity mask."""

    token_matrix: np.ndarray  # (batch, width) int32, 0 where padded
    mask: np.ndarray  # (batch, width) bool, True = real residue
    labels: np.ndarray  # (batch,) int64

    def __len__(self):
        return self.token_matrix.shape[0]


def tokenize(raw, max_len=DEFAULT_MAX_LEN, seq_id=""):
    """Encode a residue string, truncating the tail past ``max_len``.

    Canonical residues map to 1-20, B/Z/U/O to 21-24, any other letter
    to X = 25.  Case-insensitive; whitespace is stripped.
    """
    stripped = "".join(raw.split())
    if not stripped:
        raise EmptySequence(f"empty sequence{' ' + seq_id if seq_id else ''}")
    codes = tuple(
        _CODE_OF.get(ch, X_CODE) for ch in stripped.upper()[:max_len]
    )
    return TokenSequence(id=seq_id, tokens=codes)


def detokenize(tokens):
    """Inverse of tokenize for codes 1-25 (X stays X)."""
    try:
        return "".join(_LETTER_OF[t] for t in tokens)
    except KeyError as exc:
        raise ParseError(f"token code {exc.args[0]} has no letter") from None


def parse_fasta(data):
    """Parse FASTA bytes (or str) into [(id, raw_sequence), ...]."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    records = []
    current_id = None
    chunks = []
    for line in text.split("\n"):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if current_id is not None:
                records.append((current_id, "".join(chunks)))
            current_id = line[1:].split()[0] if len(line) > 1 else ""
            chunks = []
        else:
            if current_id is None:
                raise MalformedFasta("sequence content before any '>' header")
            chunks.append(line)
    if current_id is not None:
        records.append((current_id, "".join(chunks)))
    return records


def parse_label_table(data, class_count):
    """Parse "id<TAB>label" rows; labels must lie in [0, class_count)."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"line {lineno}: expected 'id<TAB>label', got {line!r}")
        name, label_text = fields
        try:
            label = int(label_text)
        except ValueError:
            raise ParseError(f"line {lineno}: label {label_text!r} is not an integer")
        if not (0 <= label < class_count):
            raise LabelOutOfRange(
                f"line {lineno}: label {label} outside [0, {class_count})"
            )
        out.append((name, label))
    return out


def parse_pair_table(data):
    """Parse "id_a<TAB>id_b<TAB>{0|1}" rows, preserving file order."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"line {lineno}: expected 'id_a<TAB>id_b<TAB>label', got {line!r}"
            )
        id_a, id_b, label_text = fields
        if label_text not in ("0", "1"):
            raise ParseError(f"line {lineno}: pair label must be 0 or 1, got {label_text!r}")
        out.append((id_a, id_b, int(label_text)))
    return out


def make_batch(examples, max_len=DEFAULT_MAX_LEN):
    """Pad LabeledExamples into a Batch; width = longest (capped) length."""
    if not examples:
        raise ParseError("cannot batch an empty example list")
    lengths = [min(ex.seq.length, max_len) for ex in examples]
    width = max(lengths)
    tokens = np.zeros((len(examples), width), dtype=np.int32)
    mask = np.zeros((len(examples), width), dtype=bool)
    for i, (ex, n) in enumerate(zip(examples, lengths)):
        tokens[i, :n] = ex.seq.tokens[:n]
        mask[i, :n] = True
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return Batch(token_matrix=tokens, mask=mask, labels=labels)
