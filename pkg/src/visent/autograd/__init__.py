"""Minimal dense-tensor engine with reverse-mode automatic differentiation."""

from . import kernels, ops
from .gradcheck import grad_check, grad_check_params
from .ops import (
    add,
    binary_op,
    concat,
    exp,
    gather_rows,
    log,
    matmul,
    mul,
    neg,
    reduce,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    softmax,
    square,
    sub,
    tanh,
    transpose,
    unary_op,
)
from .tensor import ComputationRecord, Tensor, backward

__all__ = [
    "ComputationRecord",
    "Tensor",
    "add",
    "backward",
    "binary_op",
    "concat",
    "exp",
    "gather_rows",
    "grad_check",
    "grad_check_params",
    "kernels",
    "log",
    "matmul",
    "mul",
    "neg",
    "ops",
    "reduce",
    "reduce_max",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "square",
    "sub",
    "tanh",
    "transpose",
    "unary_op",
]
