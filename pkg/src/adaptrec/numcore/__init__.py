"""Minimal dense-tensor arithmetic with reverse-mode automatic differentiation."""

from .gradcheck import check_gradients, finite_difference, max_relative_error
from .optim import Adam
from .rng import stable_hash, stream, uniform_init
from .tensor import (
    Tape,
    Tensor,
    add,
    add_rows,
    as_row,
    backward,
    concat,
    gather_by_distance,
    gather_rows,
    layernorm,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    relu,
    reset_tape,
    sigmoid,
    slice_rows,
    softmax,
    sub,
    take_row,
    tanh,
    tmean,
    transpose,
    tsum,
    watch_kinks,
    zero_grads,
)

__all__ = [
    "Adam",
    "Tape",
    "Tensor",
    "add",
    "add_rows",
    "as_row",
    "backward",
    "check_gradients",
    "concat",
    "finite_difference",
    "gather_by_distance",
    "gather_rows",
    "layernorm",
    "log",
    "matmul",
    "max_relative_error",
    "mul",
    "neg",
    "no_grad",
    "relu",
    "reset_tape",
    "sigmoid",
    "slice_rows",
    "softmax",
    "stable_hash",
    "stream",
    "sub",
    "take_row",
    "tanh",
    "tmean",
    "transpose",
    "tsum",
    "uniform_init",
    "watch_kinks",
    "zero_grads",
]
