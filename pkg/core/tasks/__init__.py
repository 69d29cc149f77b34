"""Task assembly for recognition and generation."""

from core.tasks.asr import AsrExample, DecodeResult, asr_loss, build_asr_pack, greedy_decode, strip_eos
from core.tasks.tts import (
    TtsInferenceRequest,
    build_tts_condition_pack,
    build_tts_pack,
    duration_ratio,
    generated_length,
    synthesize,
    tts_train_loss,
)

__all__ = [
    "AsrExample", "DecodeResult", "asr_loss", "build_asr_pack", "greedy_decode", "strip_eos",
    "TtsInferenceRequest", "build_tts_condition_pack", "build_tts_pack", "duration_ratio",
    "generated_length", "synthesize", "tts_train_loss",
]
