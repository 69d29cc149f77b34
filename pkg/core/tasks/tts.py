"""
Generation: text-prefixed frame infilling with a bidirectional mask.

A generation pack is laid out as [TEXT × n][TIME][FRAME × T]; the TIME row
carries the flow time and the FRAME rows carry noisy frames concatenated with
their context.
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from core.errors import CapacityError, ContractViolation, DimensionError
from core.flow.infill import (
    FlowSample,
    InfillBatch,
    apply_cfg_dropout,
    cfm_infill_loss,
    make_flow_sample,
    make_infill_batch,
    sample_span_mask,
)
from core.flow.sampler import SamplerConfig, ode_sample
from core.model.masks import AttentionMask, Role
from core.model.packing import PackedSequence
from core.model.transformer import UnifiedTransformer
from core.numerics.tensor import Tensor

logger = logging.getLogger(__name__)

MASK_MODES = ("full", "causal")


@dataclass
class TtsInferenceRequest:
    ref_frames: np.ndarray
    ref_text: List[int]
    gen_text: List[int]
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        self.ref_frames = np.asarray(self.ref_frames)
        if self.ref_frames.ndim != 2 or self.ref_frames.shape[0] < 1:
            raise ContractViolation(f"reference frames must be T×D with T >= 1, got {self.ref_frames.shape}")
        if not self.ref_text:
            raise ContractViolation("reference text must not be empty")
        if not self.gen_text:
            raise ContractViolation("generation text must not be empty")


def build_tts_condition_pack(model: UnifiedTransformer, xt: np.ndarray, ctx: np.ndarray,
                             text: Sequence[int], t: float,
                             mask_mode: str = "full") -> Tuple[PackedSequence, AttentionMask]:
    """
    Assemble [TEXT][TIME][FRAME] for one velocity evaluation.

    Empty text becomes the single null token.

    Raises:
        CapacityError: if n + 1 + T exceeds max_positions
    """
    if mask_mode not in MASK_MODES:
        raise ContractViolation(f"mask_mode must be one of {MASK_MODES}, got '{mask_mode}'")
    text = list(text) or [settings.NULL_TOKEN]
    n_frames = np.asarray(xt).shape[0]
    total = len(text) + 1 + n_frames
    if total > model.cfg.max_positions:
        raise CapacityError(total, model.cfg.max_positions, what="generation pack")
    pack = PackedSequence.from_segments([
        (Role.TEXT, model.embed_tokens(text)),
        (Role.TIME, model.time_embedding(t)),
        (Role.FRAME, model.frame_input_proj(xt, ctx)),
    ])
    return pack, AttentionMask.for_mode(mask_mode, pack.length)


def build_tts_pack(model: UnifiedTransformer, batch: InfillBatch, sample: FlowSample,
                   mask_mode: str = "full") -> Tuple[PackedSequence, AttentionMask]:
    """Training pack for an infilling batch at the path point of `sample`."""
    if sample.xt.shape != batch.ctx.shape:
        raise DimensionError(f"path point {sample.xt.shape} vs context {batch.ctx.shape}")
    return build_tts_condition_pack(model, sample.xt, batch.ctx, batch.text, sample.t, mask_mode)


def tts_train_loss(model: UnifiedTransformer, x1: np.ndarray, text: Sequence[int], rng: np.random.Generator,
                   mask_mode: str = "full",
                   ratio: Optional[float] = None,
                   p_text: float = settings.CFG_DROP_TEXT,
                   p_ctx: float = settings.CFG_DROP_CTX) -> Tensor:
    """
    Infilling flow-matching loss for one utterance.

    Draw order from `rng`: span ratio, span start, text drop, context drop,
    noise, flow time.
    """
    x1 = np.asarray(x1, dtype=model.dtype)
    m = sample_span_mask(x1.shape[0], rng, ratio=ratio)
    batch = apply_cfg_dropout(make_infill_batch(x1, m, text), rng, p_text=p_text, p_ctx=p_ctx)
    sample = make_flow_sample(x1, rng)
    batch.t = sample.t
    pack, mask = build_tts_pack(model, batch, sample, mask_mode)
    pred = model.predict_velocity(pack, mask)
    return cfm_infill_loss(pred, sample, batch.m)


def duration_ratio(ref_text: Sequence[int], gen_text: Sequence[int]) -> float:
    if len(ref_text) < 1:
        raise ContractViolation("duration ratio needs a non-empty reference text")
    return len(gen_text) / len(ref_text)


def generated_length(n_ref_frames: int, ratio: float) -> int:
    """round(T_ref · ratio), halves away from zero, at least one frame."""
    return max(1, int(math.floor(n_ref_frames * ratio + 0.5)))


def synthesize(model: UnifiedTransformer, req: TtsInferenceRequest, mask_mode: str = "full") -> np.ndarray:
    """
    Clone the reference voice onto gen_text and return only the generated frames.

    The reference frames are the context of a prefix-infilling problem over
    T_ref + T_gen frames conditioned on ref_text ++ gen_text; the reference rows
    are discarded from the sampled output.

    Raises:
        CapacityError: if the generation pack exceeds max_positions
    """
    n_ref, dim = req.ref_frames.shape
    if dim != model.cfg.frame_dim:
        raise DimensionError(f"reference frame dim {dim} != model frame_dim {model.cfg.frame_dim}")
    n_gen = generated_length(n_ref, duration_ratio(req.ref_text, req.gen_text))
    n_total = n_ref + n_gen
    text = list(req.ref_text) + list(req.gen_text)
    if len(text) + 1 + n_total > model.cfg.max_positions:
        raise CapacityError(len(text) + 1 + n_total, model.cfg.max_positions, what="synthesis pack")

    ctx = np.zeros((n_total, dim), dtype=model.dtype)
    ctx[:n_ref] = req.ref_frames
    builder = functools.partial(build_tts_condition_pack, mask_mode=mask_mode)
    logger.debug(f"synthesize: T_ref={n_ref} T_gen={n_gen} text={len(text)} nfe={req.sampler.nfe}")
    frames = ode_sample(model, ctx, text, n_total, req.sampler, builder)
    return frames[n_ref:]
