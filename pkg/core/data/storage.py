"""
On-disk corpus and frame-matrix formats.

A corpus directory holds `spec.txt` (key=value, one per line) and
`corpus.bin`: magic "UVSC", then little-endian u32 version, n_train, n_test,
frame_dim, then per example u32 token count, u32 tokens, u32 speaker id,
u32 frame count and the frames as row-major f32. Frame files hold magic
"UVFM", u32 rows, u32 cols and the f32 payload.
"""

import hashlib
import logging
import os
from dataclasses import fields
from typing import Dict, List

import numpy as np

from config import settings
from core.data.synth import Corpus, SynthExample, SynthSpec
from core.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

U32 = np.dtype("<u4")
F32 = np.dtype("<f4")


def ensure_output_dir(directory: str, force: bool = False) -> None:
    """
    Create `directory`, refusing to reuse a non-empty one unless forced.

    Raises:
        DataError: if the directory is non-empty and force is False
    """
    if os.path.isdir(directory) and os.listdir(directory) and not force:
        raise DataError(f"output directory '{directory}' is not empty (use --force to overwrite)")
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create '{directory}': {e}") from e


# ----------------------------------------------------------------------
# Spec file
# ----------------------------------------------------------------------

def format_spec(spec: SynthSpec) -> str:
    return "".join(f"{f.name}={getattr(spec, f.name)}\n" for f in fields(SynthSpec))


def parse_spec(text: str) -> SynthSpec:
    types = {f.name: f.type for f in fields(SynthSpec)}
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or key not in types:
            raise DataError(f"spec line {lineno}: cannot parse '{line}'")
        kind = types[key]
        try:
            values[key] = float(raw) if kind in (float, "float") else int(raw)
        except ValueError as e:
            raise DataError(f"spec line {lineno}: bad value for {key}: '{raw}'") from e
    try:
        return SynthSpec(**values)
    except ConfigError as e:
        raise DataError(f"invalid corpus spec: {e}") from e


# ----------------------------------------------------------------------
# Records
# ----------------------------------------------------------------------

def _encode_example(ex: SynthExample) -> bytes:
    parts = [
        np.array([len(ex.tokens)], dtype=U32).tobytes(),
        np.asarray(ex.tokens, dtype=U32).tobytes(),
        np.array([ex.speaker_id, ex.n_frames], dtype=U32).tobytes(),
        np.ascontiguousarray(ex.frames, dtype=F32).tobytes(),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, dtype: np.dtype, count: int) -> np.ndarray:
        size = dtype.itemsize * count
        if self.offset + size > len(self.payload):
            raise DataError(f"{self.source}: truncated at byte {self.offset}")
        out = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out

    def expect_magic(self, magic: bytes) -> None:
        if self.payload[self.offset:self.offset + len(magic)] != magic:
            raise DataError(f"{self.source}: bad magic (expected {magic!r})")
        self.offset += len(magic)


def _decode_examples(reader: _Reader, count: int, frame_dim: int) -> List[SynthExample]:
    examples = []
    for _ in range(count):
        n_tokens = int(reader.take(U32, 1)[0])
        tokens = reader.take(U32, n_tokens).astype(int).tolist()
        speaker_id, n_frames = (int(v) for v in reader.take(U32, 2))
        frames = reader.take(F32, n_frames * frame_dim).reshape(n_frames, frame_dim).astype(np.float32)
        examples.append(SynthExample(tokens=tokens, speaker_id=speaker_id, frames=frames))
    return examples


def save_corpus(corpus: Corpus, directory: str, force: bool = False) -> str:
    """
    Write a corpus directory.

    Returns:
        The corpus hash
    """
    ensure_output_dir(directory, force)
    spec = corpus.spec
    with open(os.path.join(directory, settings.CORPUS_SPEC_NAME), "w", encoding="utf-8") as f:
        f.write(format_spec(spec))
    header = settings.CORPUS_MAGIC + np.array(
        [settings.CORPUS_VERSION, len(corpus.train), len(corpus.test), spec.frame_dim], dtype=U32
    ).tobytes()
    with open(os.path.join(directory, settings.CORPUS_RECORDS_NAME), "wb") as f:
        f.write(header)
        for ex in corpus.train + corpus.test:
            f.write(_encode_example(ex))
    digest = corpus_hash(directory)
    logger.info(f"Saved corpus to {directory} (sha256 {digest[:12]})")
    return digest


def load_corpus(directory: str) -> Corpus:
    """
    Raises:
        DataError: if either file is missing or ill-formed
    """
    spec_path = os.path.join(directory, settings.CORPUS_SPEC_NAME)
    records_path = os.path.join(directory, settings.CORPUS_RECORDS_NAME)
    for path in (spec_path, records_path):
        if not os.path.isfile(path):
            raise DataError(f"corpus file missing: {path}")
    with open(spec_path, "r", encoding="utf-8") as f:
        spec = parse_spec(f.read())
    with open(records_path, "rb") as f:
        reader = _Reader(f.read(), records_path)

    reader.expect_magic(settings.CORPUS_MAGIC)
    version, n_train, n_test, frame_dim = (int(v) for v in reader.take(U32, 4))
    if version != settings.CORPUS_VERSION:
        raise DataError(f"{records_path}: unsupported corpus version {version}")
    if frame_dim != spec.frame_dim:
        raise DataError(f"{records_path}: frame_dim {frame_dim} disagrees with spec ({spec.frame_dim})")
    train = _decode_examples(reader, n_train, frame_dim)
    test = _decode_examples(reader, n_test, frame_dim)
    if reader.offset != len(reader.payload):
        raise DataError(f"{records_path}: {len(reader.payload) - reader.offset} trailing bytes")
    return Corpus(spec=spec, train=train, test=test)


def corpus_hash(directory: str) -> str:
    """SHA-256 over the spec file followed by the record file."""
    digest = hashlib.sha256()
    for name in (settings.CORPUS_SPEC_NAME, settings.CORPUS_RECORDS_NAME):
        with open(os.path.join(directory, name), "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                digest.update(chunk)
    return digest.hexdigest()


# ----------------------------------------------------------------------
# Frame files
# ----------------------------------------------------------------------

def write_frames(path: str, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise DataError(f"frame matrix must be 2-D, got {frames.shape}")
    try:
        with open(path, "wb") as f:
            f.write(settings.FRAMES_MAGIC)
            f.write(np.array(frames.shape, dtype=U32).tobytes())
            f.write(np.ascontiguousarray(frames, dtype=F32).tobytes())
    except OSError as e:
        raise DataError(f"cannot write frames to '{path}': {e}") from e


def read_frames(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            reader = _Reader(f.read(), path)
    except OSError as e:
        raise DataError(f"cannot read frames from '{path}': {e}") from e
    reader.expect_magic(settings.FRAMES_MAGIC)
    rows, cols = (int(v) for v in reader.take(U32, 2))
    frames = reader.take(F32, rows * cols).reshape(rows, cols).astype(np.float32)
    if reader.offset != len(reader.payload):
        raise DataError(f"{path}: trailing bytes after frame payload")
    return frames


def parse_token_list(text: str) -> List[int]:
    """Comma- or space-separated token ids."""
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as e:
        raise DataError(f"cannot parse token list '{text}'") from e

