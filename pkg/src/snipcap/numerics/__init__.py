"""Minimal differentiable computation substrate: tape tensors, ops, Adam, FD checking."""

from .tensor import NonFiniteError, ShapeMismatch, Tensor, backward, check_finite
from .ops import (
    add,
    as_tensor,
    attention,
    clip,
    concat,
    constant,
    dropout,
    embedding,
    layer_norm,
    log,
    matmul,
    mean,
    mean_pool,
    mul,
    narrow,
    neg,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum_,
    tanh,
    tile_rows,
)
from .optim import AdamState, adam_step, clip_global_norm, global_grad_norm, zero_grads
from .gradcheck import GradCheckReport, StochasticClosureError, grad_check

__all__ = [
    "AdamState",
    "GradCheckReport",
    "NonFiniteError",
    "ShapeMismatch",
    "StochasticClosureError",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "attention",
    "backward",
    "check_finite",
    "clip",
    "clip_global_norm",
    "concat",
    "constant",
    "dropout",
    "embedding",
    "global_grad_norm",
    "grad_check",
    "layer_norm",
    "log",
    "matmul",
    "mean",
    "mean_pool",
    "mul",
    "narrow",
    "neg",
    "reshape",
    "sigmoid",
    "softmax",
    "sub",
    "sum_",
    "tanh",
    "tile_rows",
    "zero_grads",
]
