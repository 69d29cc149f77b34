"""
AdamW with global-norm clipping over named numpy parameters.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

import numpy as np

from config import settings
from core.errors import DimensionError, NumericAbort
from core.train.config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    """
    Everything needed to continue training bit-exactly.

    `parameters` shares its arrays with the model, so optimizer updates are
    visible to the model without copying.
    """

    step: int
    parameters: Dict[str, np.ndarray]
    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: Optional[Dict[str, Any]] = None
    loss_stats: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @classmethod
    def fresh(cls, parameters: Dict[str, np.ndarray], rng: Optional[np.random.Generator] = None) -> 'TrainState':
        return cls(
            step=0,
            parameters=parameters,
            exp_avg={name: np.zeros_like(p) for name, p in parameters.items()},
            exp_avg_sq={name: np.zeros_like(p) for name, p in parameters.items()},
            rng_state=rng.bit_generator.state if rng is not None else None,
        )

    def record_loss(self, task: str, value: float, decay: float = settings.TRAIN_LOSS_EMA) -> None:
        """Running count and exponential moving average per task."""
        stats = self.loss_stats.setdefault(task, {"count": 0, "ema": 0.0})
        stats["ema"] = value if stats["count"] == 0 else decay * stats["ema"] + (1.0 - decay) * value
        stats["count"] += 1


def global_grad_norm(grads: Mapping[str, Optional[np.ndarray]]) -> float:
    total = 0.0
    for g in grads.values():
        if g is not None:
            total += float(np.sum(np.square(g, dtype=np.float64)))
    return math.sqrt(total)


def optimizer_step(state: TrainState, grads: Mapping[str, Optional[np.ndarray]], cfg: TrainConfig,
                   lr: float) -> TrainState:
    """
    One AdamW update in place; the step counter is incremented.

    Gradients are clipped to a global norm of grad_clip. Weight decay is
    decoupled and touches only matrices (ndim >= 2), never gains or biases.
    A missing gradient counts as zero.

    Raises:
        DimensionError: if a gradient's shape differs from its parameter
        NumericAbort: on any non-finite gradient entry
    """
    norm = global_grad_norm(grads)
    for name, g in grads.items():
        if name not in state.parameters:
            raise DimensionError(f"gradient for unknown parameter '{name}'")
        if g is None:
            continue
        if g.shape != state.parameters[name].shape:
            raise DimensionError(f"{name}: gradient {g.shape} vs parameter {state.parameters[name].shape}")
        if not np.all(np.isfinite(g)):
            logger.error(f"Non-finite gradient in {name} at step {state.step}")
            raise NumericAbort(state.step, name, norm)
    if not math.isfinite(norm):
        raise NumericAbort(state.step, None, norm)

    scale = cfg.grad_clip / norm if norm > cfg.grad_clip else 1.0
    beta1, beta2 = cfg.betas
    t = state.step + 1
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    for name, p in state.parameters.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else g * scale
        if p.ndim >= 2 and cfg.weight_decay:
            p *= 1.0 - lr * cfg.weight_decay
        m = state.exp_avg[name]
        v = state.exp_avg_sq[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)

    state.step = t
    return state
