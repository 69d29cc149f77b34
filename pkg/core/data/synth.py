"""
Synthetic paired corpus standing in for (speech, transcript) pairs.

Every content token owns a fixed block of `frames_per_token` unit-norm
prototype rows. An utterance's frames are its tokens' blocks in order, plus a
constant per-speaker offset vector, plus iid Gaussian noise. The mapping is
invertible (see core.data.oracle), so recognizers and generators can be scored
without real audio.
"""

import functools
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from tqdm import tqdm

from config import settings
from core.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

TRAIN_SPLIT = 0
TEST_SPLIT = 1


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = settings.CORPUS_VOCAB_SIZE
    frames_per_token: int = settings.CORPUS_FRAMES_PER_TOKEN
    frame_dim: int = settings.CORPUS_FRAME_DIM
    n_speakers: int = settings.CORPUS_N_SPEAKERS
    noise_std: float = settings.CORPUS_NOISE_STD
    seed: int = settings.CORPUS_SEED
    min_tokens: int = settings.CORPUS_MIN_TOKENS
    max_tokens: int = settings.CORPUS_MAX_TOKENS

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ConfigError(f"vocab_size must be >= 3, got {self.vocab_size}")
        if self.frames_per_token < 1:
            raise ConfigError(f"frames_per_token must be >= 1, got {self.frames_per_token}")
        if self.frame_dim < 4:
            raise ConfigError(f"frame_dim must be >= 4, got {self.frame_dim}")
        if self.n_speakers < 2:
            raise ConfigError(f"n_speakers must be >= 2, got {self.n_speakers}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ConfigError(f"token length range [{self.min_tokens}, {self.max_tokens}] is empty")

    @property
    def n_content_tokens(self) -> int:
        return self.vocab_size - settings.FIRST_CONTENT_TOKEN

    @property
    def seen_speakers(self) -> List[int]:
        return list(range(self.n_speakers // 2))

    @property
    def unseen_speakers(self) -> List[int]:
        return list(range(self.n_speakers // 2, self.n_speakers))

    def is_seen(self, speaker_id: int) -> bool:
        return speaker_id < self.n_speakers // 2

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SynthExample:
    tokens: List[int]
    speaker_id: int
    frames: np.ndarray

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class Corpus:
    spec: SynthSpec
    train: List[SynthExample] = field(default_factory=list)
    test: List[SynthExample] = field(default_factory=list)


@functools.lru_cache(maxsize=16)
def build_codebook(spec: SynthSpec) -> np.ndarray:
    """V × r × D prototype rows, unit norm. Rows of reserved tokens are never emitted."""
    rng = np.random.default_rng([spec.seed, 0])
    raw = rng.standard_normal((spec.vocab_size, spec.frames_per_token, spec.frame_dim))
    codebook = raw / np.linalg.norm(raw, axis=-1, keepdims=True)
    codebook.setflags(write=False)
    return codebook


def max_abs_cosine(vectors: np.ndarray) -> float:
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    gram = np.abs(unit @ unit.T)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


@functools.lru_cache(maxsize=16)
def build_speaker_offsets(spec: SynthSpec) -> np.ndarray:
    """
    S × D unit-norm offsets.

    For frame_dim >= 16 the draw is repeated until every pair has |cos| <= 0.5.

    Raises:
        DataError: if no admissible draw is found
    """
    for attempt in range(settings.SPEAKER_RESEED_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, 1, attempt])
        raw = rng.standard_normal((spec.n_speakers, spec.frame_dim))
        offsets = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        if spec.frame_dim < 16 or max_abs_cosine(offsets) <= settings.SPEAKER_MAX_ABS_COSINE:
            if attempt:
                logger.debug(f"speaker offsets accepted after {attempt} re-draws")
            offsets.setflags(write=False)
            return offsets
    raise DataError(
        f"no speaker draw with |cos| <= {settings.SPEAKER_MAX_ABS_COSINE} "
        f"in {settings.SPEAKER_RESEED_ATTEMPTS} attempts"
    )


def render_frames(spec: SynthSpec, tokens: List[int], speaker_id: int,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Frames for a token sequence; noise is drawn from `rng` when noise_std > 0."""
    codebook = build_codebook(spec)
    offsets = build_speaker_offsets(spec)
    clean = codebook[np.asarray(tokens, dtype=np.int64)].reshape(-1, spec.frame_dim) + offsets[speaker_id]
    if spec.noise_std > 0:
        if rng is None:
            raise DataError("noise_std > 0 needs a random generator")
        clean = clean + spec.noise_std * rng.standard_normal(clean.shape)
    return clean.astype(np.float32)


def _draw_example(spec: SynthSpec, split: int, index: int, attempt: int) -> SynthExample:
    rng = np.random.default_rng([spec.seed, 2, split, index, attempt])
    length = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
    tokens = rng.integers(settings.FIRST_CONTENT_TOKEN, spec.vocab_size, size=length).tolist()
    if split == TRAIN_SPLIT:
        pool = spec.seen_speakers
    else:
        pool = spec.seen_speakers if index % 2 == 0 else spec.unseen_speakers
    speaker_id = int(pool[int(rng.integers(0, len(pool)))])
    return SynthExample(tokens=tokens, speaker_id=speaker_id, frames=render_frames(spec, tokens, speaker_id, rng))


def generate_corpus(spec: SynthSpec, n_train: int, n_test: int, progress: bool = False) -> Corpus:
    """
    Deterministic corpus: identical specs give bit-identical examples.

    Training uses seen speakers only; the test split alternates seen and unseen
    speakers, and no test token sequence occurs in the training split.
    """
    if n_train < 1 or n_test < 1:
        raise ConfigError(f"n_train and n_test must be >= 1, got {n_train}/{n_test}")
    build_speaker_offsets(spec)
    total = n_train + n_test
    bar = tqdm(total=total, desc="corpus", disable=not progress)

    train = []
    train_sequences: Set[Tuple[int, ...]] = set()
    for i in range(n_train):
        ex = _draw_example(spec, TRAIN_SPLIT, i, 0)
        train.append(ex)
        train_sequences.add(tuple(ex.tokens))
        bar.update(1)

    test = []
    for i in range(n_test):
        attempt = 0
        ex = _draw_example(spec, TEST_SPLIT, i, attempt)
        while tuple(ex.tokens) in train_sequences:
            attempt += 1
            ex = _draw_example(spec, TEST_SPLIT, i, attempt)
        test.append(ex)
        bar.update(1)
    bar.close()

    logger.info(f"Generated corpus: {n_train} train / {n_test} test, V={spec.vocab_size} "
                f"D={spec.frame_dim} r={spec.frames_per_token} S={spec.n_speakers} sigma={spec.noise_std}")
    return Corpus(spec=spec, train=train, test=test)
