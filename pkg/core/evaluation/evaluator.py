"""
Recognition and voice-cloning evaluation against the oracle decoder.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import settings
from core.data.metrics import token_accuracy, token_error_rate
from core.data.oracle import oracle_decode, speaker_similarity
from core.data.synth import SynthExample, SynthSpec
from core.errors import ContractViolation
from core.flow.sampler import SamplerConfig
from core.model.transformer import UnifiedTransformer
from core.tasks.asr import greedy_decode, strip_eos
from core.tasks.tts import TtsInferenceRequest, synthesize

logger = logging.getLogger(__name__)


def _summary(frame: pd.DataFrame, columns: Sequence[str]) -> Dict[str, Any]:
    out: Dict[str, Any] = {"count": int(len(frame))}
    for col in columns:
        out[col] = float(frame[col].mean()) if len(frame) else None
    return out


def _split_summaries(frame: pd.DataFrame, columns: Sequence[str]) -> Dict[str, Any]:
    seen = frame["seen"].astype(bool)
    return {
        "all": _summary(frame, columns),
        "seen": _summary(frame[seen], columns),
        "unseen": _summary(frame[~seen], columns),
    }


def asr_records(model: UnifiedTransformer, spec: SynthSpec, examples: Sequence[SynthExample],
                max_len: Optional[int] = None, progress: bool = False) -> pd.DataFrame:
    """One row per example: greedy transcript scored against the reference tokens."""
    max_len = max_len or spec.max_tokens + 1
    rows = []
    for i, ex in enumerate(tqdm(examples, desc="eval asr", disable=not progress)):
        result = greedy_decode(model, ex.frames, max_len)
        hyp = strip_eos(result.tokens)
        rows.append({
            "index": i,
            "speaker": ex.speaker_id,
            "seen": spec.is_seen(ex.speaker_id),
            "ter": token_error_rate(hyp, ex.tokens),
            "accuracy": token_accuracy(hyp, ex.tokens),
            "truncated": result.truncated,
        })
    return pd.DataFrame(rows, columns=["index", "speaker", "seen", "ter", "accuracy", "truncated"])


def evaluate_asr(model: UnifiedTransformer, spec: SynthSpec, examples: Sequence[SynthExample],
                 max_len: Optional[int] = None, progress: bool = False) -> Dict[str, Any]:
    """Mean token error rate and accuracy of greedy decoding, split by seen/unseen speakers."""
    frame = asr_records(model, spec, examples, max_len, progress)
    summary = _split_summaries(frame, ["ter", "accuracy"])
    summary["all"]["truncated"] = int(frame["truncated"].sum()) if len(frame) else 0
    return summary


def pick_reference(examples: Sequence[SynthExample], index: int) -> Optional[int]:
    """Next example after `index` (cyclically) with the same speaker, or None."""
    speaker = examples[index].speaker_id
    n = len(examples)
    for step in range(1, n):
        j = (index + step) % n
        if examples[j].speaker_id == speaker:
            return j
    return None


def cloning_records(model: UnifiedTransformer, spec: SynthSpec, examples: Sequence[SynthExample],
                    sampler: SamplerConfig, mask_mode: str = "full", progress: bool = False) -> pd.DataFrame:
    """
    One row per example: clone its speaker from a same-speaker reference and score the output.

    The sampler seed is offset by the item index so every item draws distinct noise.
    """
    rows = []
    skipped = 0
    unscored = 0
    for i, ex in enumerate(tqdm(examples, desc="eval tts", disable=not progress)):
        j = pick_reference(examples, i)
        if j is None:
            skipped += 1
            continue
        ref = examples[j]
        request = TtsInferenceRequest(
            ref_frames=ref.frames,
            ref_text=ref.tokens,
            gen_text=ex.tokens,
            sampler=SamplerConfig(nfe=sampler.nfe, cfg_weight=sampler.cfg_weight,
                                  scheme=sampler.scheme, seed=sampler.seed + i),
        )
        generated = synthesize(model, request, mask_mode=mask_mode)
        decoded = oracle_decode(generated, spec)
        try:
            similarity = speaker_similarity(generated, ref.frames, spec)
        except ContractViolation:
            unscored += 1
            similarity = 0.0
        mse = float(np.mean((generated.astype(np.float64) - ex.frames) ** 2)) \
            if generated.shape == ex.frames.shape else float("nan")
        rows.append({
            "index": i,
            "reference": j,
            "speaker": ex.speaker_id,
            "seen": spec.is_seen(ex.speaker_id),
            "ter": token_error_rate(decoded.tokens, ex.tokens),
            "similarity": similarity,
            "mse": mse,
        })
    if skipped:
        logger.warning(f"{skipped} items had no same-speaker reference and were skipped")
    if unscored:
        logger.warning(f"{unscored} items had a degenerate speaker estimate; similarity set to 0")
    return pd.DataFrame(rows, columns=["index", "reference", "speaker", "seen", "ter", "similarity", "mse"])


def evaluate_cloning(model: UnifiedTransformer, spec: SynthSpec, examples: Sequence[SynthExample],
                     sampler: SamplerConfig, mask_mode: str = "full", progress: bool = False) -> Dict[str, Any]:
    """Oracle TER, speaker similarity and frame MSE of cloned outputs, split by seen/unseen speakers."""
    frame = cloning_records(model, spec, examples, sampler, mask_mode, progress)
    return _split_summaries(frame, ["ter", "similarity", "mse"])


def evaluate_model(model: UnifiedTransformer, spec: SynthSpec, examples: Sequence[SynthExample],
                   sampler: SamplerConfig, tasks: Sequence[str] = ("asr", "tts"),
                   mask_mode: str = "full", progress: bool = False) -> Dict[str, Any]:
    report: Dict[str, Any] = {}
    if "asr" in tasks:
        report["asr"] = evaluate_asr(model, spec, examples, progress=progress)
    if "tts" in tasks:
        report["tts"] = evaluate_cloning(model, spec, examples, sampler, mask_mode, progress)
    return report


def flatten_metrics(report: Dict[str, Any], split: str = "all") -> Dict[str, float]:
    """Flat task_metric -> value mapping for one split, skipping counts and empty splits."""
    flat: Dict[str, float] = {}
    for task, splits in report.items():
        for key, value in splits.get(split, {}).items():
            if key != "count" and value is not None:
                flat[f"{task}_{key}"] = value
    return flat


def check_compatible(model_frame_dim: int, model_vocab: int, spec: SynthSpec) -> List[str]:
    """Mismatches between a model and a corpus, as readable strings."""
    problems = []
    if model_frame_dim != spec.frame_dim:
        problems.append(f"frame_dim: checkpoint {model_frame_dim} vs corpus {spec.frame_dim}")
    if model_vocab < spec.vocab_size:
        problems.append(f"vocab_size: checkpoint {model_vocab} < corpus {spec.vocab_size}")
    if spec.vocab_size <= settings.FIRST_CONTENT_TOKEN:
        problems.append("corpus has no content tokens")
    return problems
