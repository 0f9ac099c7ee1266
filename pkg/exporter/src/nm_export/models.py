"""Embedding model resolution.

Two families of model identifiers:

* ``toy:<dim>``   - a deterministic offline embedder for tests and smoke
  runs: per-residue rows are a seeded letter table plus a seeded
  position table, so the same sequence always embeds identically.
* anything else   - treated as a Hugging Face model id and run through
  ``transformers`` (ESM-style masked LMs work out of the box).  The
  model runs in eval mode under no_grad, so exports are deterministic.

Unresolvable identifiers raise ModelUnavailable.
"""

import numpy as np

from .errors import AlignmentError, ModelUnavailable

_TOY_MAX_LEN = 2048


class ToyEmbedder:
    """Deterministic content+position hash embedder."""

    def __init__(self, dim):
        if dim < 1:
            raise ModelUnavailable(f"toy model dimension must be >= 1, got {dim}")
        self.dim = dim
        letter_rng = np.random.default_rng(7919 * dim + 1)
        pos_rng = np.random.default_rng(7919 * dim + 2)
        self._letters = letter_rng.standard_normal((26, dim)).astype(np.float32)
        self._positions = pos_rng.standard_normal((_TOY_MAX_LEN, dim)).astype(np.float32)

    def embed(self, sequence):
        idx = np.frombuffer(sequence.encode("ascii"), dtype=np.uint8) - ord("A")
        idx = np.clip(idx, 0, 25)
        n = len(idx)
        if n > _TOY_MAX_LEN:
            raise AlignmentError(f"toy model supports up to {_TOY_MAX_LEN} residues")
        return self._letters[idx] + self._positions[:n]


class HuggingFaceEmbedder:
    """Per-residue hidden states from a transformers model."""

    def __init__(self, name, layer=-1):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelUnavailable(
                f"transformers/torch not installed; cannot load {name!r}"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name)
            self._model = AutoModel.from_pretrained(name)
        except Exception as exc:
            raise ModelUnavailable(f"cannot resolve model {name!r}: {exc}") from exc
        self._torch = torch
        self._layer = layer
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)

    def embed(self, sequence):
        torch = self._torch
        enc = self._tokenizer(sequence, return_tensors="pt", add_special_tokens=True)
        special = self._tokenizer.get_special_tokens_mask(
            enc["input_ids"][0].tolist(), already_has_special_tokens=True
        )
        with torch.no_grad():
            out = self._model(**enc, output_hidden_states=True)
        hidden = out.hidden_states[self._layer][0]
        keep = [i for i, is_special in enumerate(special) if not is_special]
        rows = hidden[keep].to(torch.float32).cpu().numpy()
        if rows.shape[0] != len(sequence):
            raise AlignmentError(
                f"{rows.shape[0]} embedding rows for {len(sequence)} residues"
            )
        return rows


def resolve_model(name, layer=-1):
    """Instantiate an embedder from a model identifier string."""
    if name.startswith("toy:"):
        spec = name[len("toy:"):]
        try:
            dim = int(spec)
        except ValueError:
            raise ModelUnavailable(f"bad toy model spec {name!r}; use toy:<dim>")
        return ToyEmbedder(dim)
    return HuggingFaceEmbedder(name, layer=layer)
