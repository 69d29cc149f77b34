"""
Central finite-difference gradient checks.
"""

from typing import Callable, Dict, Optional

import numpy as np

from core.numerics.tensor import Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """
    Norm-wise relative error ||a - n|| / max(||a||, ||n||, floor).

    A floor above the finite-difference noise level turns the check absolute
    for gradients that vanish identically (e.g. attention key biases).
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    with no_grad():
        return float(loss_fn().data)


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """
    Entry-by-entry central difference of a scalar loss w.r.t. `tensor`.

    Args:
        loss_fn: Rebuilds the loss from current tensor values
        tensor: Tensor perturbed in place (restored afterwards)
        h: Step size

    Returns:
        Array shaped like tensor.data
    """
    grad = np.zeros(tensor.shape, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = _evaluate(loss_fn)
        flat[i] = original - h
        minus = _evaluate(loss_fn)
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def directional_derivative(
    loss_fn: Callable[[], Tensor],
    tensor: Tensor,
    direction: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Central difference of the loss along `direction` in the space of `tensor`."""
    original = tensor.data.copy()
    try:
        tensor.data[...] = original + h * direction
        plus = _evaluate(loss_fn)
        tensor.data[...] = original - h * direction
        minus = _evaluate(loss_fn)
    finally:
        tensor.data[...] = original
    return (plus - minus) / (2.0 * h)


def directional_check(
    loss_fn: Callable[[], Tensor],
    parameters: Dict[str, Tensor],
    rng: Optional[np.random.Generator] = None,
    h: float = 1e-5,
    n_directions: int = 1,
    floor: float = 1e-12,
) -> Dict[str, float]:
    """
    Compare backprop against finite differences along random directions per tensor.

    Gradients of `parameters` are reset, the loss is rebuilt and backpropagated
    once, and each tensor's analytic directional derivative <grad, u> is compared
    to the central difference along u.

    Returns:
        Worst relative error over the directions, per parameter name
    """
    rng = rng or np.random.default_rng(0)
    for tensor in parameters.values():
        tensor.grad = None
    loss_fn().backward()

    errors = {}
    for name, tensor in parameters.items():
        analytic_grad = tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        worst = 0.0
        for _ in range(n_directions):
            direction = rng.standard_normal(tensor.shape)
            analytic = float(np.sum(analytic_grad * direction))
            numeric = directional_derivative(loss_fn, tensor, direction, h)
            worst = max(worst, relative_error(np.array([analytic]), np.array([numeric]), floor))
        errors[name] = worst
    return errors
