"""Central-difference verification of tape gradients.

The loss builder ``f(tape)`` must be deterministic and rebuild the same
graph from the live parameter values each call; finite differences
perturb the parameter storage in place and call ``f(None)``.
Use float64 parameters: float32 finite differences are meaningless at
the tolerances this module is meant to certify.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError
from .engine import GradientTape


@dataclass
class FiniteDiffReport:
    max_rel_error: float
    param_name: str
    coord: int
    analytic: float
    numeric: float

    def __str__(self):
        return (
            f"max rel error {self.max_rel_error:.3e} at "
            f"{self.param_name}[{self.coord}] "
            f"(analytic {self.analytic:.6e}, numeric {self.numeric:.6e})"
        )


def finite_diff_check(f, params, h=1e-4):
    """Compare tape gradients of ``f`` against central differences.

    Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8)
    as the denominator; the report carries the worst offender.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    tape = GradientTape()
    loss = f(tape)
    if not np.isfinite(loss.data):
        raise NumericalError("loss is not finite at the evaluation point")
    grads = tape.gradients(loss, params)

    report = FiniteDiffReport(0.0, "<none>", -1, 0.0, 0.0)
    for k, (p, g) in enumerate(zip(params, grads)):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        name = p.name or f"param{k}"
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(None).data)
            flat[i] = orig - h
            fm = float(f(None).data)
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NumericalError(f"non-finite f while perturbing {name}[{i}]")
            numeric = (fp - fm) / (2.0 * h)
            analytic = float(gflat[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if rel > report.max_rel_error:
                report = FiniteDiffReport(rel, name, i, analytic, numeric)
    return report
