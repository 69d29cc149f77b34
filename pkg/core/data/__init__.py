"""Synthetic corpus, oracle decoding and sequence metrics."""

from core.data.metrics import levenshtein, token_accuracy, token_error_rate
from core.data.oracle import OracleResult, cosine_similarity, oracle_decode, speaker_similarity
from core.data.storage import corpus_hash, load_corpus, read_frames, save_corpus, write_frames
from core.data.synth import Corpus, SynthExample, SynthSpec, build_codebook, build_speaker_offsets, generate_corpus

__all__ = [
    "levenshtein", "token_accuracy", "token_error_rate",
    "OracleResult", "cosine_similarity", "oracle_decode", "speaker_similarity",
    "corpus_hash", "load_corpus", "read_frames", "save_corpus", "write_frames",
    "Corpus", "SynthExample", "SynthSpec", "build_codebook", "build_speaker_offsets", "generate_corpus",
]
