"""
Joint recognition + generation training loop.

Each step draws one index set from the training split; every drawn example
serves both tasks. The total loss is λ·mean(recognition) + mean(generation).
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import settings
from core.data.synth import Corpus, SynthExample
from core.errors import ConfigError, ContractViolation
from core.evaluation.evaluator import evaluate_model, flatten_metrics
from core.flow.sampler import SamplerConfig
from core.logging_config import MetricsLogger, truncate_metrics_log
from core.model.config import ModelConfig
from core.model.transformer import UnifiedTransformer
from core.numerics.functional import add, mul
from core.numerics.tensor import Tensor
from core.tasks.asr import AsrExample, asr_loss
from core.tasks.tts import tts_train_loss
from core.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from core.train.config import TrainConfig
from core.train.optimizer import TrainState, global_grad_norm, optimizer_step
from core.train.schedule import lr_at

logger = logging.getLogger(__name__)

TtsItem = Tuple[np.ndarray, Sequence[int]]


@dataclass
class TrainResult:
    checkpoint_path: str
    checkpoint_sha256: str
    step: int
    losses: Dict[str, float] = field(default_factory=dict)
    eval_metrics: Dict[str, float] = field(default_factory=dict)


def _mean(losses: List[Tensor]) -> Tensor:
    total = losses[0]
    for loss in losses[1:]:
        total = add(total, loss)
    return mul(total, 1.0 / len(losses))


def joint_loss(model: UnifiedTransformer, asr_batch: Sequence[AsrExample], tts_batch: Sequence[TtsItem],
               lambda_lm: float, rng: np.random.Generator, mask_mode: str = "full",
               asr_weight: Optional[float] = None) -> Tuple[Tensor, Dict[str, float]]:
    """
    λ·mean(recognition loss) + mean(generation loss).

    Args:
        asr_batch: Recognition examples (may be empty)
        tts_batch: (frames, text) pairs (may be empty)
        lambda_lm: Weight of the recognition term
        rng: Source of every generation-loss draw
        asr_weight: Overrides lambda_lm (recognition-only training uses 1)

    Returns:
        (total loss, unweighted per-task means)

    Raises:
        ContractViolation: if both batches are empty
    """
    if not asr_batch and not tts_batch:
        raise ContractViolation("joint loss needs at least one non-empty batch")
    parts: Dict[str, float] = {}
    total: Optional[Tensor] = None
    if asr_batch:
        asr = _mean([asr_loss(model, ex) for ex in asr_batch])
        parts["asr"] = float(asr.data)
        total = mul(asr, lambda_lm if asr_weight is None else asr_weight)
    if tts_batch:
        tts = _mean([tts_train_loss(model, frames, text, rng, mask_mode=mask_mode) for frames, text in tts_batch])
        parts["tts"] = float(tts.data)
        total = tts if total is None else add(total, tts)
    return total, parts


def asr_example(ex: SynthExample) -> AsrExample:
    return AsrExample(frames=ex.frames, transcript=list(ex.tokens) + [settings.EOS_TOKEN])


class Trainer:
    """
    Owns the model, optimizer state and run directory of one training run.

    The run directory receives `checkpoint.uvck` and `metrics.log`.
    """

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, corpus: Corpus, run_dir: str,
                 eval_examples: Optional[Sequence[SynthExample]] = None, progress: bool = False):
        if model_cfg.frame_dim != corpus.spec.frame_dim:
            raise ConfigError(f"model frame_dim {model_cfg.frame_dim} != corpus frame_dim {corpus.spec.frame_dim}")
        if model_cfg.vocab_size < corpus.spec.vocab_size:
            raise ConfigError(f"model vocab_size {model_cfg.vocab_size} < corpus vocab_size {corpus.spec.vocab_size}")
        if not corpus.train:
            raise ConfigError("corpus has no training examples")
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.corpus = corpus
        self.run_dir = run_dir
        self.progress = progress
        self.eval_examples = list(eval_examples) if eval_examples is not None \
            else corpus.test[:train_cfg.eval_items]
        self.checkpoint_path = os.path.join(run_dir, settings.CHECKPOINT_NAME)
        self.metrics_path = os.path.join(run_dir, settings.METRICS_LOG_NAME)

        self.model = UnifiedTransformer(model_cfg, seed=train_cfg.seed)
        self.rng = np.random.default_rng(train_cfg.seed)
        self.state = TrainState.fresh(self._param_arrays(), self.rng)
        self.last_eval: Dict[str, float] = {}

    def _param_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.model.params.items()}

    # ------------------------------------------------------------------
    # Checkpointing
    # ------------------------------------------------------------------

    def to_checkpoint(self) -> Checkpoint:
        optimizer = {}
        for name in self.model.params:
            optimizer[f"exp_avg/{name}"] = self.state.exp_avg[name]
            optimizer[f"exp_avg_sq/{name}"] = self.state.exp_avg_sq[name]
        self.state.rng_state = self.rng.bit_generator.state
        metadata = {
            "step": self.state.step,
            "rng_state": self.state.rng_state,
            "loss_stats": self.state.loss_stats,
            "train_cfg": self.cfg.to_dict(),
        }
        return Checkpoint(
            model_cfg=self.model_cfg.to_dict(),
            parameters=self.model.state_dict(),
            optimizer=optimizer,
            metadata=metadata,
        )

    def save(self) -> str:
        return save_checkpoint(self.checkpoint_path, self.to_checkpoint())

    def restore(self, ckpt: Checkpoint) -> None:
        """
        Continue from a checkpoint of the same model configuration.

        Raises:
            ConfigError: if the checkpoint's model configuration differs
        """
        if ModelConfig.from_dict(ckpt.model_cfg) != self.model_cfg:
            raise ConfigError("checkpoint model configuration differs from the requested one")
        self.model.load_state_dict(ckpt.parameters)
        params = self._param_arrays()
        self.state = TrainState(
            step=int(ckpt.metadata["step"]),
            parameters=params,
            exp_avg={n: np.array(ckpt.optimizer[f"exp_avg/{n}"], dtype=params[n].dtype) for n in params},
            exp_avg_sq={n: np.array(ckpt.optimizer[f"exp_avg_sq/{n}"], dtype=params[n].dtype) for n in params},
            rng_state=ckpt.metadata["rng_state"],
            loss_stats=ckpt.metadata.get("loss_stats", {}),
        )
        self.rng.bit_generator.state = ckpt.metadata["rng_state"]
        logger.info(f"Resumed from step {self.state.step}")

    def resume(self) -> bool:
        if not os.path.isfile(self.checkpoint_path):
            return False
        self.restore(load_checkpoint(self.checkpoint_path))
        return True

    # ------------------------------------------------------------------
    # Steps
    # ------------------------------------------------------------------

    def _draw_batch(self) -> Tuple[List[AsrExample], List[TtsItem]]:
        n = len(self.corpus.train)
        indices = self.rng.integers(0, n, size=self.cfg.batch_items)
        examples = [self.corpus.train[int(i)] for i in indices]
        asr_batch = [asr_example(ex) for ex in examples] if self.cfg.trains_asr else []
        tts_batch = [(ex.frames, ex.tokens) for ex in examples] if self.cfg.trains_tts else []
        return asr_batch, tts_batch

    def train_step(self) -> Dict[str, float]:
        """One optimizer update; returns the logged scalars."""
        asr_batch, tts_batch = self._draw_batch()
        self.model.zero_grad()
        total, parts = joint_loss(
            self.model, asr_batch, tts_batch, self.cfg.lambda_lm, self.rng,
            mask_mode=self.cfg.tts_mask,
            asr_weight=1.0 if self.cfg.task_mix == "asr_only" else None,
        )
        total.backward()
        grads = {name: p.grad for name, p in self.model.params.items()}
        grad_norm = global_grad_norm(grads)
        lr = lr_at(self.state.step + 1, self.cfg)
        optimizer_step(self.state, grads, self.cfg, lr)
        for task, value in parts.items():
            self.state.record_loss(task, value)
        record = {"loss": float(total.data), "lr": lr, "grad_norm": grad_norm}
        record.update({f"{task}_loss": value for task, value in parts.items()})
        return record

    def evaluate(self) -> Dict[str, float]:
        """Evaluate a snapshot of the current weights on the held-out examples."""
        if not self.eval_examples:
            return {}
        tasks = [t for t, on in (("asr", self.cfg.trains_asr), ("tts", self.cfg.trains_tts)) if on]
        sampler = SamplerConfig(nfe=self.cfg.eval_nfe, seed=self.cfg.seed)
        report = evaluate_model(self.model.clone(), self.corpus.spec, self.eval_examples, sampler,
                                tasks=tasks, mask_mode=self.cfg.tts_mask)
        return flatten_metrics(report)

    def train_run(self, resume: bool = False, metrics: Optional[MetricsLogger] = None) -> TrainResult:
        """
        Train until total_steps, logging, evaluating and checkpointing at fixed intervals.

        Raises:
            NumericAbort: on a non-finite gradient
            CheckpointError: if a checkpoint cannot be written
        """
        if resume and self.resume():
            logger.info(f"Continuing run in {self.run_dir} at step {self.state.step}")
        os.makedirs(self.run_dir, exist_ok=True)
        log_path = metrics.path if metrics is not None else self.metrics_path
        dropped = truncate_metrics_log(log_path, self.state.step)
        if dropped:
            logger.info(f"Dropped {dropped} metrics records past step {self.state.step} from {log_path}")
        own_metrics = metrics is None
        metrics = metrics or MetricsLogger(self.metrics_path)
        record: Dict[str, float] = {}
        sha = ""
        try:
            bar = tqdm(total=self.cfg.total_steps, initial=self.state.step, desc="train",
                       disable=not self.progress)
            while self.state.step < self.cfg.total_steps:
                record = self.train_step()
                step = self.state.step
                bar.update(1)
                if step % self.cfg.log_every == 0 or step == self.cfg.total_steps:
                    metrics.log("train", step=step, task=self.cfg.task_mix, **record)
                if step % self.cfg.eval_every == 0 or step == self.cfg.total_steps:
                    self.last_eval = self.evaluate()
                    if self.last_eval:
                        metrics.log("eval", step=step, task=self.cfg.task_mix, **self.last_eval)
                if step % self.cfg.checkpoint_every == 0 and step != self.cfg.total_steps:
                    self.save()
            bar.close()
            sha = self.save()
        finally:
            if own_metrics:
                metrics.close()
        logger.info(f"Training finished at step {self.state.step}")
        return TrainResult(
            checkpoint_path=self.checkpoint_path,
            checkpoint_sha256=sha,
            step=self.state.step,
            losses=record,
            eval_metrics=self.last_eval,
        )


def load_model(path: str) -> Tuple[UnifiedTransformer, Dict[str, Any]]:
    """Model and metadata from a checkpoint file."""
    ckpt = load_checkpoint(path)
    try:
        cfg = ModelConfig.from_dict(ckpt.model_cfg)
    except TypeError as e:
        raise ConfigError(f"checkpoint model configuration is invalid: {e}") from e
    model = UnifiedTransformer(cfg)
    model.load_state_dict(ckpt.parameters)
    return model, ckpt.metadata
