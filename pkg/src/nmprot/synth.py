"""Bundled synthetic benchmark: planted-motif classification.

Class-1 sequences carry a fixed 5-residue motif at a random position in
otherwise uniform random residues (lengths 40-60); class-0 sequences
are rejection-sampled to be motif-free, so the classes are separable by
construction (a brute-force 5-mer scan achieves 100%).  The pair
variant labels a pair positive exactly when member A carries one motif
and member B carries the complementary one.
"""

import numpy as np

from .seqdata import CANONICAL, LabeledExample, PairExample, tokenize

MOTIF_A = "CWHCY"
MOTIF_B = "WYKHW"

_LEN_RANGE = (40, 60)


def _random_seq(rng, forbid=()):
    n = int(rng.integers(_LEN_RANGE[0], _LEN_RANGE[1] + 1))
    while True:
        letters = "".join(CANONICAL[i] for i in rng.integers(0, len(CANONICAL), size=n))
        if not any(m in letters for m in forbid):
            return letters


def _plant(rng, motif):
    base = _random_seq(rng, forbid=(MOTIF_A, MOTIF_B))
    pos = int(rng.integers(0, len(base) - len(motif) + 1))
    return base[:pos] + motif + base[pos + len(motif):]


def motif_wise(seed, n_train=128, n_val=128, n_test=192, max_len=64):
    """Binary protein-wise splits; labels alternate for exact balance."""
    rng = np.random.default_rng(seed)
    splits = []
    counter = 0
    for split_name, count in (("tr", n_train), ("va", n_val), ("te", n_test)):
        examples = []
        for i in range(count):
            label = i % 2
            letters = _plant(rng, MOTIF_A) if label == 1 else _random_seq(
                rng, forbid=(MOTIF_A, MOTIF_B)
            )
            seq = tokenize(letters, max_len=max_len, seq_id=f"m{split_name}{counter}")
            examples.append(LabeledExample(seq=seq, label=label))
            counter += 1
        splits.append(examples)
    return tuple(splits)


def motif_pair(seed, n_train=96, n_val=48, n_test=96, max_len=64):
    """Pair splits: positive iff A carries MOTIF_A and B carries MOTIF_B."""
    rng = np.random.default_rng(seed)
    splits = []
    counter = 0
    for split_name, count in (("tr", n_train), ("va", n_val), ("te", n_test)):
        pairs = []
        for i in range(count):
            label = i % 2

            def fresh(letters):
                nonlocal counter
                seq = tokenize(letters, max_len=max_len, seq_id=f"p{split_name}{counter}")
                counter += 1
                return seq

            if label == 1:
                a, b = _plant(rng, MOTIF_A), _plant(rng, MOTIF_B)
            else:
                # Non-interacting: at least one side lacks its motif.
                kind = int(rng.integers(0, 3))
                if kind == 0:
                    a, b = _plant(rng, MOTIF_A), _random_seq(rng, forbid=(MOTIF_A, MOTIF_B))
                elif kind == 1:
                    a, b = _random_seq(rng, forbid=(MOTIF_A, MOTIF_B)), _plant(rng, MOTIF_B)
                else:
                    a = _random_seq(rng, forbid=(MOTIF_A, MOTIF_B))
                    b = _random_seq(rng, forbid=(MOTIF_A, MOTIF_B))
            pairs.append(PairExample(seq_a=fresh(a), seq_b=fresh(b), label=label))
        splits.append(pairs)
    return tuple(splits)
