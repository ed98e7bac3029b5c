from .gradcheck import finite_difference_check, numeric_grad, relative_error
from .rng import make_rng
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    chunk,
    concat,
    gate,
    gelu,
    getitem,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    scale_shift,
    sigmoid,
    silu,
    softmax,
    sub,
    swap_last,
    transpose,
    tsum,
)

__all__ = [
    "Tensor", "add", "as_tensor", "backward", "chunk", "concat", "gate", "gelu",
    "getitem", "layer_norm", "linear", "matmul", "mean", "mul", "no_grad", "reshape",
    "scale_shift", "sigmoid", "silu", "softmax", "sub", "swap_last", "transpose", "tsum",
    "finite_difference_check", "numeric_grad", "relative_error", "make_rng",
]
