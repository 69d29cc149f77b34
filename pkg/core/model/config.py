"""
Model configuration.
"""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict

from config import settings
from core.errors import ConfigError


@dataclass
class ModelConfig:
    """Shape of the shared transformer and its two input/output pathways."""

    d_model: int = settings.MODEL_D_MODEL
    n_heads: int = settings.MODEL_N_HEADS
    n_layers: int = settings.MODEL_N_LAYERS
    vocab_size: int = settings.CORPUS_VOCAB_SIZE
    frame_dim: int = settings.CORPUS_FRAME_DIM
    max_positions: int = settings.MODEL_MAX_POSITIONS
    adapter_pool: int = settings.MODEL_ADAPTER_POOL
    tie_embeddings: bool = settings.MODEL_TIE_EMBEDDINGS
    time_embedding_scale: float = settings.MODEL_TIME_EMBEDDING_SCALE
    init_std: float = settings.MODEL_INIT_STD

    def __post_init__(self):
        for name in ("d_model", "n_heads", "vocab_size", "frame_dim", "max_positions", "adapter_pool"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"ModelConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.n_layers < 0:
            raise ConfigError(f"ModelConfig.n_layers must be >= 0, got {self.n_layers}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.vocab_size <= settings.FIRST_CONTENT_TOKEN:
            raise ConfigError(f"vocab_size must exceed the {settings.FIRST_CONTENT_TOKEN} reserved tokens")
        if self.init_std <= 0:
            raise ConfigError("init_std must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**data)

    def expected_parameter_count(self) -> int:
        """Closed-form parameter count for this configuration."""
        d, V, P, D = self.d_model, self.vocab_size, self.max_positions, self.frame_dim
        count = (
            V * d
            + P * d
            + (d * d + d)
            + (2 * D * d + d)
            + (D * d + d)
            + self.n_layers * (12 * d * d + 13 * d)
            + 2 * d
            + (d * D + D)
        )
        if not self.tie_embeddings:
            count += V * d
        return count
