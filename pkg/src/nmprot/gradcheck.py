"""Whole-pipeline gradient verification suite.

Builds small random model instances in float64 and checks the tape
gradients of the uniformity loss, the supervised loss, and their sum
against central finite differences over every parameter coordinate.
"""

import time
from dataclasses import dataclass

import numpy as np

from .encoder import encode
from .head import classify_and_loss, self_attend_pool, total_loss
from .model import Model, ModelConfig
from .negmine import cross_attention, negative_loss, uniform_target
from .numcore import finite_diff_check, matmul
from .seqdata import TokenSequence

LOSS_KINDS = ("L_N", "L_S", "L_total")

# Central-difference steps balancing truncation against roundoff for each
# loss scale: the uniformity loss sits around 1e-2 (roundoff negligible,
# so a small step controls curvature), the cross-entropy terms around 1
# (a larger step keeps eps*|f|/h above the 1e-8 denominator floor).
FD_STEPS = {"L_N": 5e-5, "L_S": 2e-4, "L_total": 2e-4}


@dataclass
class SuiteResult:
    max_errors: dict  # loss kind -> worst relative error over instances
    worst: dict  # loss kind -> worst FiniteDiffReport
    instances: int
    seconds: float

    @property
    def overall(self):
        return max(self.max_errors.values())


def _random_sequence(rng, length, seq_id):
    tokens = tuple(int(t) for t in rng.integers(1, 26, size=length))
    return TokenSequence(id=seq_id, tokens=tokens)


def toy_instance(seed):
    """A small float64 model plus one anchor, two negatives, one label."""
    rng = np.random.default_rng(seed)
    d_model = int(rng.choice([4, 6]))
    hidden = int(rng.choice([4, 5, 6]))
    class_count = int(rng.integers(2, 5))
    cfg = ModelConfig(
        task="wise",
        class_count=class_count,
        d_model=d_model,
        layers=1,
        heads=2,
        ffn_dim=8,
        hidden_dim=hidden,
        max_len=16,
        encoder_mode="scratch",
    )
    model = Model(cfg, seed=seed, dtype=np.float64)
    m = int(rng.integers(3, 13))
    anchor = _random_sequence(rng, m, "anchor")
    negatives = [
        _random_sequence(rng, int(rng.integers(3, 13)), f"neg{i}") for i in range(2)
    ]
    label = int(rng.integers(0, class_count))
    return model, anchor, negatives, label


def make_loss_fn(model, anchor, negatives, label, kind):
    """Closure rebuilding the requested loss from live parameter values."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"kind must be one of {LOSS_KINDS}")

    def f(tape):
        e_g = encode(anchor, model.encoder, trainable=True, tape=tape)
        k_g = matmul(e_g.values, model.proj.w_key, tape)
        l_n = None
        if kind in ("L_N", "L_total"):
            atts, targets = [], []
            for neg in negatives:
                e_n = encode(neg, model.encoder, trainable=True, tape=tape)
                atts.append(
                    cross_attention(e_n, e_g, model.proj, tape=tape, k_g=k_g)
                )
                targets.append(
                    uniform_target(
                        np.ones(neg.length, dtype=bool),
                        np.ones(anchor.length, dtype=bool),
                        dtype=np.float64,
                    )
                )
            l_n = negative_loss(atts, targets, tape)
            if kind == "L_N":
                return l_n
        h = self_attend_pool(e_g, model.proj, tape=tape, k_g=k_g)
        _, l_s = classify_and_loss(h, model.cls, label, tape)
        if kind == "L_S":
            return l_s
        return total_loss(l_s, l_n, lam=1.0, tape=tape).total

    return f


def run_suite(instances=20, seed=0, h=None, kinds=LOSS_KINDS):
    """Gradient-check ``instances`` random instances per loss kind.

    ``h`` overrides the per-loss default steps in FD_STEPS.
    """
    t0 = time.perf_counter()
    max_errors = {k: 0.0 for k in kinds}
    worst = {k: None for k in kinds}
    for i in range(instances):
        model, anchor, negatives, label = toy_instance(seed + i)
        params = model.parameters()
        for kind in kinds:
            f = make_loss_fn(model, anchor, negatives, label, kind)
            report = finite_diff_check(f, params, h=h or FD_STEPS[kind])
            if report.max_rel_error >= max_errors[kind]:
                max_errors[kind] = report.max_rel_error
                worst[kind] = report
    return SuiteResult(
        max_errors=max_errors,
        worst=worst,
        instances=instances,
        seconds=time.perf_counter() - t0,
    )
