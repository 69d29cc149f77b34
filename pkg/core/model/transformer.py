"""
Shared transformer backbone for recognition and generation.

One set of weights serves both tasks: recognition packs run under a causal
mask and read the vocabulary head, generation packs run under a bidirectional
mask and read the velocity head. Time conditioning enters only through the
TIME position of a generation pack; blocks carry no per-layer modulation.
"""

import logging
import math
from collections import OrderedDict
from typing import Dict, Sequence, Union

import numpy as np

from config import settings
from core.errors import CapacityError, DimensionError, DomainError
from core.model.config import ModelConfig
from core.model.masks import AttentionMask, Role
from core.model.packing import PackedSequence
from core.numerics.functional import (
    add,
    concat,
    layer_norm,
    matmul,
    mul,
    silu,
    slice_cols,
    softmax_rows,
    take_rows,
    transpose,
)
from core.numerics.tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)

FrameInput = Union[np.ndarray, Tensor]


def sinusoidal_time_embedding(t: float, d_model: int, scale: float = 1.0,
                              base: float = settings.TIME_EMBEDDING_BASE) -> np.ndarray:
    """
    Interleaved sin/cos encoding of a flow time over a geometric frequency ladder.

    Entry 2i is sin(s / base^(2i/d)) and entry 2i+1 is cos(s / base^(2i/d)),
    where s = scale·t.

    Raises:
        DomainError: if t lies outside [0, 1]
    """
    t = float(t)
    if not 0.0 <= t <= 1.0 or math.isnan(t):
        raise DomainError(f"flow time must lie in [0, 1], got {t}")
    if d_model < 1:
        raise DomainError(f"d_model must be >= 1, got {d_model}")
    index = np.arange(d_model)
    exponent = (index - index % 2) / float(d_model)
    angle = (scale * t) / np.power(base, exponent)
    return np.where(index % 2 == 0, np.sin(angle), np.cos(angle))


def mean_pool_frames(frames: np.ndarray, pool: int) -> np.ndarray:
    """Non-overlapping temporal mean over windows of `pool` frames; the last window may be shorter."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise DimensionError(f"frames must be T×D with T >= 1, got {frames.shape}")
    if pool < 1:
        raise DomainError(f"pool must be >= 1, got {pool}")
    n_out = -(-frames.shape[0] // pool)
    return np.stack([frames[k * pool:(k + 1) * pool].mean(axis=0) for k in range(n_out)])


class UnifiedTransformer:
    """
    Pre-norm transformer with token, frame and audio input pathways and two heads.

    Parameters live in `self.params`, an ordered name -> Tensor mapping.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=None):
        self.cfg = cfg
        self.dtype = np.dtype(dtype or default_dtype())
        self.params: Dict[str, Tensor] = OrderedDict()
        self._init_parameters(np.random.default_rng(seed))
        logger.debug(f"UnifiedTransformer: {self.num_parameters()} parameters ({self.dtype})")

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True, dtype=self.dtype, name=name)

    def _init_parameters(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        d, V, D = cfg.d_model, cfg.vocab_size, cfg.frame_dim
        std = cfg.init_std
        residual_std = std / math.sqrt(2 * cfg.n_layers) if cfg.n_layers else std

        def normal(*shape, scale=std):
            return rng.normal(0.0, scale, size=shape)

        self._add("tok_emb", normal(V, d))
        self._add("pos_emb", normal(cfg.max_positions, d))
        self._add("time_proj.w", normal(d, d))
        self._add("time_proj.b", np.zeros(d))
        self._add("frame_in.w", normal(2 * D, d))
        self._add("frame_in.b", np.zeros(d))
        self._add("adapter.w", normal(D, d))
        self._add("adapter.b", np.zeros(d))
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            self._add(p + "ln1.g", np.ones(d))
            self._add(p + "ln1.b", np.zeros(d))
            for proj in ("q", "k", "v"):
                self._add(p + f"attn.w{proj}", normal(d, d))
                self._add(p + f"attn.b{proj}", np.zeros(d))
            self._add(p + "attn.wo", normal(d, d, scale=residual_std))
            self._add(p + "attn.bo", np.zeros(d))
            self._add(p + "ln2.g", np.ones(d))
            self._add(p + "ln2.b", np.zeros(d))
            self._add(p + "mlp.w1", normal(d, settings.MLP_EXPANSION * d))
            self._add(p + "mlp.b1", np.zeros(settings.MLP_EXPANSION * d))
            self._add(p + "mlp.w2", normal(settings.MLP_EXPANSION * d, d, scale=residual_std))
            self._add(p + "mlp.b2", np.zeros(d))
        self._add("ln_f.g", np.ones(d))
        self._add("ln_f.b", np.zeros(d))
        if not cfg.tie_embeddings:
            self._add("lm_head.w", normal(V, d))
        self._add("velocity_head.w", normal(d, D))
        self._add("velocity_head.b", np.zeros(D))

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise DimensionError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, value in state.items():
            if value.shape != self.params[name].shape:
                raise DimensionError(f"{name}: expected {self.params[name].shape}, got {value.shape}")
            self.params[name].data = np.array(value, dtype=self.dtype)

    def clone(self) -> 'UnifiedTransformer':
        """Independent copy of the weights (read-only snapshots for evaluation)."""
        other = UnifiedTransformer.__new__(UnifiedTransformer)
        other.cfg = self.cfg
        other.dtype = self.dtype
        other.params = OrderedDict(
            (name, Tensor(p.data.copy(), requires_grad=True, dtype=self.dtype, name=name))
            for name, p in self.params.items()
        )
        return other

    # ------------------------------------------------------------------
    # Input pathways
    # ------------------------------------------------------------------

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        return add(matmul(x, self.params[prefix + ".w"]), self.params[prefix + ".b"])

    def _as_input(self, value: FrameInput) -> Tensor:
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value), dtype=self.dtype)

    def embed_tokens(self, tokens: Sequence[int]) -> Tensor:
        return take_rows(self.params["tok_emb"], tokens)

    def time_embedding(self, t: float) -> Tensor:
        """1×d_model TIME row: learned projection of the scaled sinusoid."""
        raw = sinusoidal_time_embedding(t, self.cfg.d_model, scale=self.cfg.time_embedding_scale)
        return self._linear(Tensor(raw[None, :], dtype=self.dtype), "time_proj")

    def frame_input_proj(self, noisy: FrameInput, ctx: FrameInput) -> Tensor:
        """Concatenate noisy and context frames to T×2D, then project to T×d_model."""
        noisy, ctx = self._as_input(noisy), self._as_input(ctx)
        if noisy.shape != ctx.shape or noisy.ndim != 2:
            raise DimensionError(f"noisy {noisy.shape} and context {ctx.shape} frames must match")
        if noisy.shape[1] != self.cfg.frame_dim:
            raise DimensionError(f"frame dim {noisy.shape[1]} != model frame_dim {self.cfg.frame_dim}")
        return self._linear(concat([noisy, ctx], axis=1), "frame_in")

    def audio_adapter(self, frames: np.ndarray) -> Tensor:
        """Mean-pool frames over windows of adapter_pool, then project to d_model."""
        frames = np.asarray(frames)
        if frames.ndim != 2 or frames.shape[1] != self.cfg.frame_dim:
            raise DimensionError(f"audio frames {frames.shape} do not match frame_dim {self.cfg.frame_dim}")
        pooled = mean_pool_frames(frames, self.cfg.adapter_pool)
        return self._linear(Tensor(pooled, dtype=self.dtype), "adapter")

    # ------------------------------------------------------------------
    # Backbone
    # ------------------------------------------------------------------

    def attention_layer(self, x: Tensor, mask: AttentionMask, layer: int) -> Tensor:
        """
        One pre-norm block: masked multi-head attention + residual, then MLP + residual.

        Raises:
            DimensionError: if the mask length differs from the sequence length
        """
        if mask.length != x.shape[0]:
            raise DimensionError(f"mask length {mask.length} != sequence length {x.shape[0]}")
        p = f"layers.{layer}."
        P = self.params
        hd = self.cfg.head_dim
        scale = 1.0 / math.sqrt(hd)

        h = layer_norm(x, P[p + "ln1.g"], P[p + "ln1.b"])
        q = add(matmul(h, P[p + "attn.wq"]), P[p + "attn.bq"])
        k = add(matmul(h, P[p + "attn.wk"]), P[p + "attn.bk"])
        v = add(matmul(h, P[p + "attn.wv"]), P[p + "attn.bv"])
        heads = []
        for i in range(self.cfg.n_heads):
            lo, hi = i * hd, (i + 1) * hd
            q_i, k_i, v_i = slice_cols(q, lo, hi), slice_cols(k, lo, hi), slice_cols(v, lo, hi)
            scores = mul(matmul(q_i, transpose(k_i)), scale)
            heads.append(matmul(softmax_rows(scores, mask), v_i))
        attended = heads[0] if len(heads) == 1 else concat(heads, axis=1)
        x = add(x, add(matmul(attended, P[p + "attn.wo"]), P[p + "attn.bo"]))

        h = layer_norm(x, P[p + "ln2.g"], P[p + "ln2.b"])
        h = silu(add(matmul(h, P[p + "mlp.w1"]), P[p + "mlp.b1"]))
        return add(x, add(matmul(h, P[p + "mlp.w2"]), P[p + "mlp.b2"]))

    def forward_backbone(self, pack: PackedSequence, mask: AttentionMask) -> Tensor:
        """
        Add positional embeddings, run every block, apply the final layer norm.

        Raises:
            CapacityError: if the pack exceeds max_positions
            DimensionError: if the mask does not match the pack
        """
        L = pack.length
        if L > self.cfg.max_positions:
            raise CapacityError(L, self.cfg.max_positions, what="packed sequence")
        if mask.length != L:
            raise DimensionError(f"mask length {mask.length} != pack length {L}")
        x = add(pack.embeddings, take_rows(self.params["pos_emb"], range(L)))
        for i in range(self.cfg.n_layers):
            x = self.attention_layer(x, mask, i)
        return layer_norm(x, self.params["ln_f.g"], self.params["ln_f.b"])

    # ------------------------------------------------------------------
    # Heads
    # ------------------------------------------------------------------

    def lm_head(self, h: Tensor) -> Tensor:
        weight = self.params["tok_emb"] if self.cfg.tie_embeddings else self.params["lm_head.w"]
        return matmul(h, transpose(weight))

    def velocity_head(self, h: Tensor) -> Tensor:
        return self._linear(h, "velocity_head")

    def predict_velocity(self, pack: PackedSequence, mask: AttentionMask) -> Tensor:
        """Velocity rows at the FRAME positions of a generation pack, in order."""
        h = self.forward_backbone(pack, mask)
        frames = pack.positions(Role.FRAME)
        if not frames:
            raise DimensionError("pack has no FRAME positions")
        return self.velocity_head(take_rows(h, frames))
