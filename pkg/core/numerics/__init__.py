"""Dense tensors and reverse-mode differentiation."""

from core.numerics.tensor import (
    ComputationTape,
    Tensor,
    backward,
    default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
)
from core.numerics.functional import (
    add,
    as_tensor,
    concat,
    cross_entropy,
    div,
    layer_norm,
    masked_mean_square,
    matmul,
    mean_all,
    mul,
    silu,
    slice_cols,
    softmax_rows,
    sub,
    sum_all,
    take_rows,
    transpose,
)

__all__ = [
    "ComputationTape", "Tensor", "backward", "default_dtype", "is_grad_enabled", "no_grad", "precision",
    "add", "as_tensor", "concat", "cross_entropy", "div", "layer_norm", "masked_mean_square", "matmul",
    "mean_all", "mul", "silu", "slice_cols", "softmax_rows", "sub", "sum_all", "take_rows", "transpose",
]
