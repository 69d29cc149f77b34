"""
Differentiable primitives over core.numerics.tensor.Tensor.

Each primitive computes its forward value with numpy and registers a backward
closure returning one gradient per input (None for inputs that need none).
Broadcasting is limited to scalars and trailing-dimension vectors (biases,
gains); anything else is a DimensionError.
"""

from typing import Iterable, Optional, Sequence, Union

import numpy as np

from config import settings
from core.errors import ContractViolation, DimensionError
from core.numerics.tensor import Tensor

Operand = Union[Tensor, float, int, np.ndarray]


def as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors in the dtype of `like`."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _check_broadcast(a: tuple, b: tuple) -> None:
    if a == b or a == () or b == ():
        return
    if len(a) == 1 and len(b) >= 1 and a[0] == b[-1]:
        return
    if len(b) == 1 and len(a) >= 1 and b[0] == a[-1]:
        return
    raise DimensionError(f"cannot combine shapes {a} and {b}")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    if shape == ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


def _pair(a: Operand, b: Operand):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    _check_broadcast(a.shape, b.shape)
    return a, b


# ----------------------------------------------------------------------
# Elementwise arithmetic
# ----------------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), _backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), _backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), _backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        grad_a = g / b.data
        grad_b = -g * a.data / (b.data * b.data)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return Tensor._from_op(a.data / b.data, (a, b), _backward, "div")


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x), the smooth-gated MLP nonlinearity."""
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = x.data * s

    def _backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return Tensor._from_op(out, (x,), _backward, "silu")


# ----------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    def _backward(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return Tensor._from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,), _backward, "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def _backward(g):
        return (np.broadcast_to(g / n, x.shape).astype(x.dtype),)

    return Tensor._from_op(np.asarray(x.data.mean(), dtype=x.dtype), (x,), _backward, "mean")


# ----------------------------------------------------------------------
# Linear algebra and layout
# ----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of a (M×K) and b (K×N).

    Raises:
        DimensionError: if either operand is not 2-D or inner extents differ
    """
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def _backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), _backward, "matmul")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {x.shape}")

    def _backward(g):
        return (g.T,)

    return Tensor._from_op(np.ascontiguousarray(x.data.T), (x,), _backward, "transpose")


def take_rows(x: Tensor, rows: Sequence[int]) -> Tensor:
    """Gather rows (embedding lookup); backward scatter-adds into the source."""
    index = np.asarray(rows, dtype=np.int64).reshape(-1)
    if x.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D tensor, got {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise DimensionError(f"row index out of range for {x.shape[0]} rows")

    def _backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(x.data[index], (x,), _backward, "take_rows")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(f"invalid column slice [{start}:{stop}] of {x.shape}")

    def _backward(g):
        grad = np.zeros_like(x.data)
        grad[:, start:stop] = g
        return (grad,)

    return Tensor._from_op(np.ascontiguousarray(x.data[:, start:stop]), (x,), _backward, "slice_cols")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(tensors)
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    if any(p.ndim != 2 for p in parts):
        raise DimensionError("concat supports 2-D tensors only")
    other = 1 - axis
    if len({p.shape[other] for p in parts}) != 1:
        raise DimensionError(f"concat extents differ along axis {other}: {[p.shape for p in parts]}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def _backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    data = np.concatenate([p.data for p in parts], axis=axis)
    return Tensor._from_op(data, tuple(parts), _backward, "concat")


# ----------------------------------------------------------------------
# Normalization and probabilities
# ----------------------------------------------------------------------


def softmax_rows(x: Tensor, mask) -> Tensor:
    """
    Row-wise softmax restricted to allowed entries.

    Masked entries get exactly 0; allowed entries of each row sum to 1.

    Args:
        x: Scores (M×N)
        mask: Boolean allow-matrix (M×N) or an AttentionMask

    Raises:
        DimensionError: if the mask shape differs from x
        ContractViolation: if some row allows no entry
    """
    allow = np.asarray(getattr(mask, "allow", mask), dtype=bool)
    if x.ndim != 2 or allow.shape != x.shape:
        raise DimensionError(f"mask {allow.shape} does not match scores {x.shape}")
    if not allow.any(axis=1).all():
        raise ContractViolation("softmax_rows: a row has no allowed entry")

    z = np.where(allow, x.data, x.dtype.type(settings.MASKED_SCORE))
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(allow, np.exp(z), 0.0).astype(x.dtype)
    y = e / e.sum(axis=1, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor._from_op(y, (x,), _backward, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = settings.LAYER_NORM_EPS) -> Tensor:
    """
    Normalize the last axis to zero mean and unit variance, then apply gain and bias.

    Raises:
        DimensionError: if gain/bias do not match the last extent
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last extent {d}")

    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def _backward(g):
        lead = tuple(range(g.ndim - 1))
        grad_gain = (g * xhat).sum(axis=lead)
        grad_bias = g.sum(axis=lead)
        dxhat = g * gain.data
        grad_x = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias

    return Tensor._from_op(out.astype(x.dtype), (x, gain, bias), _backward, "layer_norm")


def cross_entropy(logits: Tensor, targets: Sequence[int], ignore: Iterable[int] = ()) -> Tensor:
    """
    Mean negative log-likelihood of `targets` over non-ignored rows.

    Args:
        logits: Unnormalized scores (N×V)
        targets: One token id per row
        ignore: Row indices excluded from the mean

    Raises:
        DimensionError: if targets do not match the rows of logits
        ContractViolation: if a target is out of range or every row is ignored
    """
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy needs N×V logits, got {logits.shape}")
    n, v = logits.shape
    target = np.asarray(targets, dtype=np.int64).reshape(-1)
    if target.shape[0] != n:
        raise DimensionError(f"{target.shape[0]} targets for {n} logit rows")
    if target.size and (target.min() < 0 or target.max() >= v):
        raise ContractViolation(f"targets must lie in [0, {v})")

    keep = np.ones(n, dtype=bool)
    for i in ignore:
        if not 0 <= i < n:
            raise ContractViolation(f"ignored position {i} outside [0, {n})")
        keep[i] = False
    rows = np.nonzero(keep)[0]
    if rows.size == 0:
        raise ContractViolation("cross_entropy: every position is ignored")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - lse
    loss = -log_probs[rows, target[rows]].mean()

    def _backward(g):
        grad = np.exp(log_probs)
        grad[rows, target[rows]] -= 1.0
        grad[~keep] = 0.0
        return (grad * (g / rows.size),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), _backward, "cross_entropy")


def masked_mean_square(diff: Tensor, row_mask: np.ndarray) -> Tensor:
    """
    Mean of squared entries over the rows selected by `row_mask`.

    Unselected rows contribute exactly zero value and exactly zero gradient.

    Raises:
        ContractViolation: if no row is selected
    """
    m = np.asarray(row_mask, dtype=bool).reshape(-1)
    if diff.ndim != 2 or m.shape[0] != diff.shape[0]:
        raise DimensionError(f"row mask of length {m.shape[0]} does not match {diff.shape}")
    selected = int(m.sum())
    if selected == 0:
        raise ContractViolation("masked loss needs at least one selected row")
    weights = np.repeat(m[:, None], diff.shape[1], axis=1).astype(diff.dtype)
    denom = float(selected * diff.shape[1])
    return sum_all(diff * diff * weights) / denom


