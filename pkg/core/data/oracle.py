"""
Exact inverse of the synthetic token-to-frame mapping.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from config import settings
from core.data.synth import SynthSpec, build_codebook
from core.errors import ContractViolation, DimensionError

logger = logging.getLogger(__name__)

MAX_REDECODE_PASSES = 4


@dataclass
class OracleResult:
    tokens: List[int]
    speaker_estimate: np.ndarray
    truncated: bool = False


def _nearest_tokens(blocks: np.ndarray, prototypes: np.ndarray, offset: np.ndarray) -> np.ndarray:
    centered = blocks - offset
    # squared distance of every block (B×r×D) to every prototype (K×r×D)
    dist = (
        np.einsum("brd,brd->b", centered, centered)[:, None]
        - 2.0 * np.einsum("brd,krd->bk", centered, prototypes)
        + np.einsum("krd,krd->k", prototypes, prototypes)[None, :]
    )
    return np.argmin(dist, axis=1)


def oracle_decode(frames: np.ndarray, spec: SynthSpec) -> OracleResult:
    """
    Recover tokens and the speaker offset from frames.

    The offset is first estimated as mean(frames) minus the mean content
    prototype; blocks of r frames are decoded to the nearest prototype after
    subtracting it, the offset is re-estimated as the mean residual, and the
    blocks are decoded again until the tokens stop changing. Ties go to the
    lowest token id. A tail shorter than r frames is dropped and flagged.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != spec.frame_dim:
        raise DimensionError(f"frames {frames.shape} do not match frame_dim {spec.frame_dim}")
    r = spec.frames_per_token
    n_blocks = frames.shape[0] // r
    truncated = frames.shape[0] % r != 0
    if truncated:
        logger.debug(f"oracle_decode: dropping {frames.shape[0] % r} tail frames")
    if n_blocks == 0:
        return OracleResult(tokens=[], speaker_estimate=np.zeros(spec.frame_dim), truncated=truncated)

    blocks = frames[:n_blocks * r].reshape(n_blocks, r, spec.frame_dim)
    prototypes = np.asarray(build_codebook(spec)[settings.FIRST_CONTENT_TOKEN:], dtype=np.float64)

    estimate = blocks.mean(axis=(0, 1)) - prototypes.mean(axis=(0, 1))
    ids = _nearest_tokens(blocks, prototypes, estimate)
    for _ in range(MAX_REDECODE_PASSES):
        estimate = (blocks - prototypes[ids]).mean(axis=(0, 1))
        new_ids = _nearest_tokens(blocks, prototypes, estimate)
        if np.array_equal(new_ids, ids):
            break
        ids = new_ids
    estimate = (blocks - prototypes[ids]).mean(axis=(0, 1))

    tokens = (ids + settings.FIRST_CONTENT_TOKEN).astype(int).tolist()
    return OracleResult(tokens=tokens, speaker_estimate=estimate, truncated=truncated)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ContractViolation("cosine similarity of a zero-norm vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def speaker_similarity(a: np.ndarray, b: np.ndarray, spec: SynthSpec) -> float:
    """Cosine between the oracle speaker estimates of two frame matrices."""
    return cosine_similarity(oracle_decode(a, spec).speaker_estimate, oracle_decode(b, spec).speaker_estimate)
