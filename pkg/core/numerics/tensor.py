"""
Dense tensors with reverse-mode differentiation.

A Tensor wraps a numpy array. Operations on tensors that require gradients
record their inputs and a backward closure; `backward()` orders the recorded
graph topologically (a ComputationTape) and pushes gradients from the loss
back to every leaf that requires them.
"""

import contextlib
import threading
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ContractViolation

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _Mode(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.dtype = np.dtype(np.float32)


_mode = _Mode()


def default_dtype() -> np.dtype:
    """Floating dtype new tensors are created with on this thread."""
    return _mode.dtype


def is_grad_enabled() -> bool:
    return _mode.grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording (inference, sampling, finite differences)."""
    previous = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = previous


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """
    Create tensors in the given floating dtype inside the block.

    Training runs in float32; gradient checks switch to float64.
    """
    previous = _mode.dtype
    _mode.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _mode.dtype = previous


class Tensor:
    """Dense real array carrying an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data = np.array(data, dtype=dtype or default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence['Tensor'], backward: BackwardFn, op: str) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out.op = op
        if _mode.grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    @property
    def T(self) -> 'Tensor':
        from core.numerics.functional import transpose
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float('nan')

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ------------------------------------------------------------------
    # Arithmetic (delegates to core.numerics.functional)
    # ------------------------------------------------------------------

    def __add__(self, other):
        from core.numerics.functional import add
        return add(self, other)

    def __radd__(self, other):
        from core.numerics.functional import add
        return add(other, self)

    def __sub__(self, other):
        from core.numerics.functional import sub
        return sub(self, other)

    def __rsub__(self, other):
        from core.numerics.functional import sub
        return sub(other, self)

    def __mul__(self, other):
        from core.numerics.functional import mul
        return mul(self, other)

    def __rmul__(self, other):
        from core.numerics.functional import mul
        return mul(other, self)

    def __truediv__(self, other):
        from core.numerics.functional import div
        return div(self, other)

    def __neg__(self):
        from core.numerics.functional import mul
        return mul(self, -1.0)

    def __matmul__(self, other):
        from core.numerics.functional import matmul
        return matmul(self, other)

    def sum(self) -> 'Tensor':
        from core.numerics.functional import sum_all
        return sum_all(self)

    def mean(self) -> 'Tensor':
        from core.numerics.functional import mean_all
        return mean_all(self)

    def backward(self) -> None:
        backward(self)


class ComputationTape:
    """
    Topologically ordered record of the operations that produced a root tensor.

    Only nodes that require gradients are recorded; every node's inputs
    precede it in `nodes`.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: List[Tensor] = self._topological_order(root)

    @staticmethod
    def _topological_order(root: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, seed: np.ndarray) -> None:
        """Propagate `seed` (d loss / d root) to every leaf, each node visited once."""
        pending: Dict[int, np.ndarray] = {id(self.root): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            parent_grads = node._backward(grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad


def backward(loss: Tensor) -> None:
    """
    Accumulate d loss / d leaf into `.grad` of every leaf requiring gradients.

    Repeated calls without resetting gradients add up.

    Raises:
        ContractViolation: if the loss is not a scalar
    """
    if loss.data.size != 1:
        raise ContractViolation(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    ComputationTape(loss).backward(np.ones_like(loss.data))
