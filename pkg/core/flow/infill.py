"""
Flow-matching training objective for frame infilling.

Samples follow the straight path xt = t·x1 + (1 - t)·x0 from standard normal
noise x0 to data x1, with regression target x1 - x0. Only the masked span of
frames is generated; the rest is given as context.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from core.errors import ContractViolation, DimensionError, DomainError
from core.numerics.functional import masked_mean_square, sub
from core.numerics.tensor import Tensor


@dataclass
class FlowSample:
    x0: np.ndarray
    x1: np.ndarray
    t: float
    xt: np.ndarray
    target_velocity: np.ndarray


@dataclass
class InfillBatch:
    """
    One infilling training item.

    m marks the frames to generate (True); ctx equals x1 with those rows zeroed.
    """

    x1: np.ndarray
    m: np.ndarray
    ctx: np.ndarray
    text: List[int]
    t: float = 0.0
    drop_text: bool = False
    drop_ctx: bool = False

    @property
    def mask_ratio(self) -> float:
        return float(self.m.sum()) / float(self.m.shape[0])


def sample_span_mask(n_frames: int, rng: np.random.Generator,
                     ratio_range: Tuple[float, float] = (settings.TTS_MASK_RATIO_MIN, settings.TTS_MASK_RATIO_MAX),
                     ratio: Optional[float] = None) -> np.ndarray:
    """
    Contiguous span of ceil(ratio·T) frames (at least one) at a uniform start offset.

    Args:
        n_frames: Sequence length T
        rng: Source of the ratio and start draws
        ratio_range: Bounds of the uniform ratio draw
        ratio: Fixed ratio; the ratio draw still happens so streams stay aligned

    Returns:
        Boolean vector of length T
    """
    if n_frames < 1:
        raise DimensionError(f"need at least one frame, got {n_frames}")
    lo, hi = ratio_range
    if not 0.0 < lo <= hi <= 1.0:
        raise DomainError(f"mask ratio range must satisfy 0 < lo <= hi <= 1, got {ratio_range}")
    drawn = rng.uniform(lo, hi)
    ratio = drawn if ratio is None else ratio
    span = min(n_frames, max(1, math.ceil(ratio * n_frames)))
    start = int(rng.integers(0, n_frames - span + 1))
    m = np.zeros(n_frames, dtype=bool)
    m[start:start + span] = True
    return m


def make_infill_batch(x1: np.ndarray, m: np.ndarray, text: Sequence[int]) -> InfillBatch:
    x1 = np.asarray(x1)
    m = np.asarray(m, dtype=bool)
    if x1.ndim != 2 or m.shape != (x1.shape[0],):
        raise DimensionError(f"mask of shape {m.shape} does not match frames {x1.shape}")
    ctx = np.where(m[:, None], 0.0, x1).astype(x1.dtype)
    return InfillBatch(x1=x1, m=m, ctx=ctx, text=list(text))


def make_flow_sample(x1: np.ndarray, rng: np.random.Generator, t: Optional[float] = None) -> FlowSample:
    """Draw x0 ~ N(0, I) and t ~ U[0, 1] (unless given) and build the path point."""
    x1 = np.asarray(x1)
    x0 = rng.standard_normal(x1.shape).astype(x1.dtype)
    drawn = float(rng.uniform(0.0, 1.0))
    t = drawn if t is None else float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"flow time must lie in [0, 1], got {t}")
    xt = (t * x1 + (1.0 - t) * x0).astype(x1.dtype)
    return FlowSample(x0=x0, x1=x1, t=t, xt=xt, target_velocity=(x1 - x0).astype(x1.dtype))


def apply_cfg_dropout(batch: InfillBatch, rng: np.random.Generator,
                      p_text: float = settings.CFG_DROP_TEXT,
                      p_ctx: float = settings.CFG_DROP_CTX) -> InfillBatch:
    """
    Independently drop the text condition and the frame context.

    A dropped text becomes the single null token; a dropped context becomes all zeros.
    Both uniforms are always drawn.
    """
    for name, p in (("p_text", p_text), ("p_ctx", p_ctx)):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {p}")
    drop_text = bool(rng.uniform() < p_text)
    drop_ctx = bool(rng.uniform() < p_ctx)
    return replace(
        batch,
        text=[settings.NULL_TOKEN] if drop_text else list(batch.text),
        ctx=np.zeros_like(batch.ctx) if drop_ctx else batch.ctx,
        drop_text=drop_text,
        drop_ctx=drop_ctx,
    )


def cfm_infill_loss(pred_velocity: Tensor, sample: FlowSample, m: np.ndarray) -> Tensor:
    """
    Squared velocity error averaged over the masked frames, normalized by |m|·D.

    Raises:
        DimensionError: if shapes disagree
        ContractViolation: if the mask selects no frame
    """
    if pred_velocity.shape != sample.target_velocity.shape:
        raise DimensionError(f"prediction {pred_velocity.shape} vs target {sample.target_velocity.shape}")
    m = np.asarray(m, dtype=bool)
    if not m.any():
        raise ContractViolation("infilling loss needs at least one masked frame")
    target = Tensor(sample.target_velocity, dtype=pred_velocity.dtype)
    return masked_mean_square(sub(pred_velocity, target), m)
