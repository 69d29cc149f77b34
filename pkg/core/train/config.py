"""
Training configuration.
"""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Tuple

from config import settings
from core.errors import ConfigError

TASK_MIXES = ("joint", "asr_only", "tts_only")
TTS_MASKS = ("full", "causal")


@dataclass
class TrainConfig:
    lambda_lm: float = settings.TRAIN_LAMBDA_LM
    lr_peak: float = settings.TRAIN_LR_PEAK
    warmup_steps: int = settings.TRAIN_WARMUP_STEPS
    total_steps: int = settings.TRAIN_TOTAL_STEPS
    batch_items: int = settings.TRAIN_BATCH_ITEMS
    betas: Tuple[float, float] = settings.TRAIN_BETAS
    adam_eps: float = settings.TRAIN_ADAM_EPS
    weight_decay: float = settings.TRAIN_WEIGHT_DECAY
    grad_clip: float = settings.TRAIN_GRAD_CLIP
    seed: int = settings.TRAIN_SEED
    task_mix: str = "joint"
    tts_mask: str = "full"
    log_every: int = settings.TRAIN_LOG_EVERY
    eval_every: int = settings.TRAIN_EVAL_EVERY
    eval_items: int = settings.TRAIN_EVAL_ITEMS
    eval_nfe: int = settings.TRAIN_EVAL_NFE
    checkpoint_every: int = settings.TRAIN_CHECKPOINT_EVERY

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.lambda_lm < 0:
            raise ConfigError(f"lambda_lm must be >= 0, got {self.lambda_lm}")
        if self.lr_peak < 0:
            raise ConfigError(f"lr_peak must be >= 0, got {self.lr_peak}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ConfigError(f"warmup_steps={self.warmup_steps} must lie in [0, total_steps={self.total_steps}]")
        if self.batch_items < 1:
            raise ConfigError(f"batch_items must be >= 1, got {self.batch_items}")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.adam_eps <= 0 or self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigError("adam_eps and grad_clip must be positive, weight_decay non-negative")
        if self.task_mix not in TASK_MIXES:
            raise ConfigError(f"task_mix must be one of {TASK_MIXES}, got '{self.task_mix}'")
        if self.tts_mask not in TTS_MASKS:
            raise ConfigError(f"tts_mask must be one of {TTS_MASKS}, got '{self.tts_mask}'")
        for name in ("log_every", "eval_every", "checkpoint_every", "eval_nfe"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.eval_items < 0:
            raise ConfigError(f"eval_items must be >= 0, got {self.eval_items}")

    @property
    def trains_asr(self) -> bool:
        return self.task_mix in ("joint", "asr_only")

    @property
    def trains_tts(self) -> bool:
        return self.task_mix in ("joint", "tts_only")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["betas"] = list(self.betas)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**data)
