"""Bias-corrected Adam over a fixed parameter list."""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import ShapeError


@dataclass
class AdamState:
    """First/second moments aligned with one parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state):
    """One in-place update: p -= lr * m_hat / (sqrt(v_hat) + eps).

    ``params`` and ``grads`` must align with the list the state was built
    for.  Returns the same (params, state) objects for call-chaining.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads, and optimizer state must align")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape}")
        kernels.adam_update(
            p.data.reshape(-1),
            np.ascontiguousarray(g, dtype=p.data.dtype).reshape(-1),
            m.reshape(-1),
            v.reshape(-1),
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
            c1,
            c2,
        )
    return params, state
