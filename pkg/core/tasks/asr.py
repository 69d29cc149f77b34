"""
Recognition: audio frames in, transcript tokens out, under a causal mask.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from config import settings
from core.errors import CapacityError, ContractViolation, DomainError
from core.model.masks import AttentionMask, Role
from core.model.packing import PackedSequence
from core.model.transformer import UnifiedTransformer
from core.numerics.functional import cross_entropy, take_rows
from core.numerics.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class AsrExample:
    """Frames paired with a transcript that ends in exactly one EOS token."""

    frames: np.ndarray
    transcript: List[int]

    def __post_init__(self):
        self.transcript = [int(tok) for tok in self.transcript]
        if not self.transcript:
            raise ContractViolation("transcript must not be empty")
        if self.transcript[-1] != settings.EOS_TOKEN or self.transcript.count(settings.EOS_TOKEN) != 1:
            raise ContractViolation("transcript must contain the EOS token exactly once, in last position")


@dataclass
class DecodeResult:
    tokens: List[int]
    truncated: bool


def audio_length(model: UnifiedTransformer, n_frames: int) -> int:
    """Number of AUDIO positions after pooling."""
    return -(-n_frames // model.cfg.adapter_pool)


def _pack(model: UnifiedTransformer, frames: np.ndarray, tokens: Sequence[int],
          loss_positions: Sequence[int] = ()) -> Tuple[PackedSequence, AttentionMask]:
    n_audio = audio_length(model, np.asarray(frames).shape[0])
    total = n_audio + len(tokens)
    if total > model.cfg.max_positions:
        raise CapacityError(total, model.cfg.max_positions, what="recognition pack")
    segments = [(Role.AUDIO, model.audio_adapter(frames))]
    if tokens:
        segments.append((Role.TEXT, model.embed_tokens(tokens)))
    pack = PackedSequence.from_segments(segments, loss_positions)
    return pack, AttentionMask.causal(pack.length)


def build_asr_pack(model: UnifiedTransformer, ex: AsrExample) -> Tuple[PackedSequence, AttentionMask]:
    """
    Layout [AUDIO × ceil(T/pool)][TEXT × n] under a causal mask.

    Every TEXT position is a loss position; its token is predicted from the
    output one position earlier, so the first token is predicted from the last
    AUDIO position.

    Raises:
        CapacityError: if the pack exceeds max_positions
    """
    n_audio = audio_length(model, np.asarray(ex.frames).shape[0])
    loss_positions = list(range(n_audio, n_audio + len(ex.transcript)))
    return _pack(model, ex.frames, ex.transcript, loss_positions)


def asr_loss(model: UnifiedTransformer, ex: AsrExample) -> Tensor:
    """Mean next-token cross-entropy over the transcript."""
    pack, mask = build_asr_pack(model, ex)
    h = model.forward_backbone(pack, mask)
    sources = [p - 1 for p in pack.loss_positions]
    logits = model.lm_head(take_rows(h, sources))
    return cross_entropy(logits, ex.transcript)


def greedy_decode(model: UnifiedTransformer, frames: np.ndarray, max_len: int) -> DecodeResult:
    """
    Append the most probable token one step at a time until EOS or max_len.

    np.argmax returns the first maximum, so ties go to the lowest token id.
    A decode also stops, flagged truncated, when the pack would outgrow max_positions.
    """
    if max_len < 1:
        raise DomainError(f"max_len must be >= 1, got {max_len}")
    n_audio = audio_length(model, np.asarray(frames).shape[0])
    if n_audio > model.cfg.max_positions:
        raise CapacityError(n_audio, model.cfg.max_positions, what="recognition pack")
    # The pack never holds the last emitted token.
    budget = min(max_len, model.cfg.max_positions - n_audio + 1)

    tokens: List[int] = []
    with no_grad():
        while len(tokens) < budget:
            pack, mask = _pack(model, frames, tokens)
            h = model.forward_backbone(pack, mask)
            logits = model.lm_head(take_rows(h, [pack.length - 1]))
            token = int(np.argmax(logits.data[0]))
            tokens.append(token)
            if token == settings.EOS_TOKEN:
                return DecodeResult(tokens=tokens, truncated=False)
    return DecodeResult(tokens=tokens, truncated=True)


def strip_eos(tokens: Sequence[int]) -> List[int]:
    """Tokens before the first EOS."""
    out = []
    for tok in tokens:
        if tok == settings.EOS_TOKEN:
            break
        out.append(int(tok))
    return out
