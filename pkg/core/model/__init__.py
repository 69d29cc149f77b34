"""Shared transformer backbone, packing and attention masks."""

from core.model.config import ModelConfig
from core.model.masks import AttentionMask, Role
from core.model.packing import PackedSequence
from core.model.transformer import UnifiedTransformer, mean_pool_frames, sinusoidal_time_embedding

__all__ = [
    "ModelConfig", "AttentionMask", "Role", "PackedSequence",
    "UnifiedTransformer", "mean_pool_frames", "sinusoidal_time_embedding",
]
