"""Reverse-mode autodiff, attention blocks and Adam."""

from specmix.diffcore.attention import (
    MultiHeadAttention,
    default_heads,
    multi_head_attention,
    scaled_dot_attention,
)
from specmix.diffcore.optim import Adam, AdamState, adam_step
from specmix.diffcore.tensor import (
    Tensor,
    abs_,
    add,
    arccos,
    as_tensor,
    attention,
    concat,
    det,
    div,
    exp,
    getitem,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    scale,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "Adam",
    "AdamState",
    "MultiHeadAttention",
    "Tensor",
    "abs_",
    "adam_step",
    "add",
    "arccos",
    "as_tensor",
    "attention",
    "concat",
    "default_heads",
    "det",
    "div",
    "exp",
    "getitem",
    "log",
    "matmul",
    "mean",
    "mul",
    "multi_head_attention",
    "no_grad",
    "power",
    "relu",
    "reshape",
    "scale",
    "scaled_dot_attention",
    "softmax",
    "sqrt",
    "square",
    "stack",
    "sub",
    "sum_",
    "transpose",
]
