"""
Learning-rate schedule: linear warmup, then cosine decay to a floor.
"""

import math

from config import settings
from core.errors import DomainError
from core.train.config import TrainConfig


def lr_at(step: int, cfg: TrainConfig) -> float:
    """
    Learning rate at `step` in [0, total_steps].

    Rises linearly from 0 to lr_peak over warmup_steps, then follows a half
    cosine down to lr_peak·LR_FLOOR_RATIO at total_steps.
    """
    if not 0 <= step <= cfg.total_steps:
        raise DomainError(f"step {step} outside [0, {cfg.total_steps}]")
    floor = cfg.lr_peak * settings.TRAIN_LR_FLOOR_RATIO
    if step < cfg.warmup_steps:
        return cfg.lr_peak * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span == 0:
        # warmup ends at total_steps; the floor rule wins there
        return floor
    progress = (step - cfg.warmup_steps) / span
    return floor + (cfg.lr_peak - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))
