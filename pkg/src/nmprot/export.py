"""Interpretability exports: cross-attention matrices and response scores.

For a pair (A, B) the exported matrix has B's residues as query rows
over A's residues as key columns, matching the orientation the
uniformity loss trains.  Scores for each chain come from the matrix in
which that chain is the key side.
"""

import csv
from pathlib import Path

from .errors import UnknownId
from .head import response_scores, top_k_residues
from .negmine import cross_attention


def _fmt(v):
    return f"{v:.6g}"


def _resolve(model, seq_id, sequences):
    if model.config.encoder_mode == "store":
        return model.store.lookup(seq_id)
    if sequences is None or seq_id not in sequences:
        raise UnknownId(f"id {seq_id!r} not found in the provided dataset")
    return model.embed(sequences[seq_id])


def export_attention(model, id_a, id_b, out_dir, sequences=None, k=2):
    """Write attention + response CSVs for the pair (id_a, id_b).

    Files written in ``out_dir``:
      attention_ba.csv  l x m matrix, B rows (queries) over A columns (keys)
      response_a.csv    per-residue scores of chain A ("residue,score")
      response_b.csv    per-residue scores of chain B
      topk.csv          "chain,rank,residue,score" for the top-k per chain
      meta.csv          mean attention per direction and matrix dims

    Returns the score arrays and top-k lists for programmatic use.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emb_a = _resolve(model, id_a, sequences)
    emb_b = _resolve(model, id_b, sequences)

    att_ba = cross_attention(
        emb_b, emb_a, model.proj, scaled=model.config.cross_scaled
    )
    att_ab = cross_attention(
        emb_a, emb_b, model.proj, scaled=model.config.cross_scaled
    )
    scores_a = response_scores(att_ba)
    scores_b = response_scores(att_ab)
    top_a = top_k_residues(scores_a, k)
    top_b = top_k_residues(scores_b, k)
    matrix = att_ba.values.data
    l, m = matrix.shape

    with open(out / "attention_ba.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query"] + [str(j) for j in range(m)])
        for i in range(l):
            w.writerow([str(i)] + [_fmt(v) for v in matrix[i]])

    for name, scores in (("response_a.csv", scores_a), ("response_b.csv", scores_b)):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["residue", "score"])
            for j, s in enumerate(scores):
                w.writerow([str(j), _fmt(s)])

    with open(out / "topk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "rank", "residue", "score"])
        for chain, top in (("A", top_a), ("B", top_b)):
            for rank, (idx, score) in enumerate(top, start=1):
                w.writerow([chain, str(rank), str(idx), _fmt(score)])

    with open(out / "meta.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["id_a", id_a])
        w.writerow(["id_b", id_b])
        w.writerow(["rows_b", str(l)])
        w.writerow(["cols_a", str(m)])
        w.writerow(["mean_attention_ba", _fmt(matrix.mean())])
        w.writerow(["mean_attention_ab", _fmt(att_ab.values.data.mean())])

    return {
        "matrix_ba": matrix,
        "scores_a": scores_a,
        "scores_b": scores_b,
        "top_a": top_a,
        "top_b": top_b,
    }
