"""Tensor core: autograd tape, differentiable ops, Adam, gradient checks."""

from .adam import AdamState, adam_step
from .engine import (
    GradientTape,
    Tensor,
    add,
    backward,
    concat_last,
    constant,
    cross_entropy_logits,
    gather_rows,
    matmul,
    mean_pool_rows,
    mse_masked,
    parameter,
    relu,
    reshape,
    row_block,
    scale,
    softmax_rows,
    stack_rows,
    sum_all,
    tanh,
)
from .fdcheck import FiniteDiffReport, finite_diff_check

__all__ = [
    "AdamState",
    "FiniteDiffReport",
    "GradientTape",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "concat_last",
    "constant",
    "cross_entropy_logits",
    "finite_diff_check",
    "gather_rows",
    "matmul",
    "mean_pool_rows",
    "mse_masked",
    "parameter",
    "relu",
    "reshape",
    "row_block",
    "scale",
    "softmax_rows",
    "stack_rows",
    "sum_all",
    "tanh",
]
