"""
Command-line surface: gen-data, train, eval, synth and ablate.

Library code raises DualMaskError subclasses; `main` maps them to exit codes
(0 success, 2 usage, 3 data/config, 4 numeric abort or checkpoint failure).
"""

import argparse
import json
import logging
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import settings
from core.data.metrics import token_accuracy
from core.data.oracle import oracle_decode
from core.data.storage import (
    corpus_hash,
    ensure_output_dir,
    load_corpus,
    parse_token_list,
    read_frames,
    save_corpus,
    write_frames,
)
from core.data.synth import SynthSpec, generate_corpus
from core.errors import ConfigError, DataError, DualMaskError, UsageError
from core.evaluation.evaluator import check_compatible, evaluate_model
from core.evaluation.report import ReportGenerator
from core.experiments import AblationRunner, load_studies
from core.flow.sampler import SCHEMES, SamplerConfig
from core.logging_config import setup_logging
from core.model.config import ModelConfig
from core.tasks.tts import TtsInferenceRequest, synthesize
from core.train.checkpoint import file_sha256
from core.train.config import TASK_MIXES, TTS_MASKS, TrainConfig
from core.train.trainer import Trainer, load_model

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Run directories
# ----------------------------------------------------------------------

class RunDirectory:
    """
    Exclusive ownership of an output directory plus its manifest.

    The lock file is created with O_EXCL and removed on exit; the manifest is
    written on entry, before any long computation, and finalized on exit.
    """

    def __init__(self, path: str, argv: Sequence[str], config: Dict[str, Any], force: bool = False,
                 reuse: bool = False):
        self.path = path
        self.lock_path = os.path.join(path, settings.LOCK_NAME)
        self.manifest_path = os.path.join(path, settings.MANIFEST_NAME)
        self.force = force
        self.reuse = reuse
        self.manifest: Dict[str, Any] = {
            "command": list(argv),
            "config": config,
            "started": None,
            "finished": None,
        }

    def __enter__(self) -> 'RunDirectory':
        if not self.reuse:
            ensure_output_dir(self.path, self.force)
        os.makedirs(self.path, exist_ok=True)
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise DataError(f"run directory '{self.path}' is locked by another process ({self.lock_path})") from e
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        self.manifest["started"] = datetime.now().isoformat()
        self.write_manifest()
        return self

    def update(self, **fields: Any) -> None:
        self.manifest.update(fields)
        self.write_manifest()

    def write_manifest(self) -> None:
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True)

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            self.manifest["finished"] = datetime.now().isoformat()
            self.manifest["status"] = "ok" if exc_type is None else exc_type.__name__
            self.write_manifest()
        finally:
            if os.path.exists(self.lock_path):
                os.remove(self.lock_path)


# ----------------------------------------------------------------------
# Argument groups
# ----------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--out", required=out_required, help="Output directory")
    parser.add_argument("--seed", type=int, default=0, help="Seed for every random draw of the command")
    parser.add_argument("--force", action="store_true", help="Reuse a non-empty output directory")
    parser.add_argument("--quiet", action="store_true", help="Hide progress bars")


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--d-model", type=int, default=settings.MODEL_D_MODEL)
    group.add_argument("--heads", type=int, default=settings.MODEL_N_HEADS)
    group.add_argument("--layers", type=int, default=settings.MODEL_N_LAYERS)
    group.add_argument("--max-positions", type=int, default=settings.MODEL_MAX_POSITIONS)
    group.add_argument("--adapter-pool", type=int, default=settings.MODEL_ADAPTER_POOL)
    group.add_argument("--untied", action="store_true", help="Separate vocabulary head weights")


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--corpus", required=True, help="Corpus directory written by gen-data")
    group.add_argument("--steps", type=int, default=settings.TRAIN_TOTAL_STEPS)
    group.add_argument("--warmup", type=int, default=None,
                       help=f"Warmup steps (default: min({settings.TRAIN_WARMUP_STEPS}, steps))")
    group.add_argument("--lr", type=float, default=settings.TRAIN_LR_PEAK)
    group.add_argument("--batch", type=int, default=settings.TRAIN_BATCH_ITEMS)
    group.add_argument("--weight-decay", type=float, default=settings.TRAIN_WEIGHT_DECAY)
    group.add_argument("--grad-clip", type=float, default=settings.TRAIN_GRAD_CLIP)
    group.add_argument("--log-every", type=int, default=settings.TRAIN_LOG_EVERY)
    group.add_argument("--eval-every", type=int, default=settings.TRAIN_EVAL_EVERY)
    group.add_argument("--eval-items", type=int, default=settings.TRAIN_EVAL_ITEMS)
    group.add_argument("--eval-nfe", type=int, default=settings.TRAIN_EVAL_NFE)
    group.add_argument("--checkpoint-every", type=int, default=settings.TRAIN_CHECKPOINT_EVERY)
    group.add_argument("--resume", action="store_true", help="Continue from the run directory's checkpoint")


def _add_sampler_args(parser: argparse.ArgumentParser, nfe: int = settings.SAMPLER_NFE) -> None:
    group = parser.add_argument_group("sampling")
    group.add_argument("--nfe", type=int, default=nfe)
    group.add_argument("--cfg-weight", type=float, default=settings.SAMPLER_CFG_WEIGHT)
    group.add_argument("--scheme", choices=SCHEMES, default=settings.SAMPLER_SCHEME)
    group.add_argument("--tts-mask", choices=TTS_MASKS, default="full")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualmask",
        description="Joint recognition and generation with one transformer and a dual attention mask.",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate a synthetic paired corpus")
    _add_common(gen)
    gen.add_argument("--vocab-size", type=int, default=settings.CORPUS_VOCAB_SIZE)
    gen.add_argument("--frames-per-token", type=int, default=settings.CORPUS_FRAMES_PER_TOKEN)
    gen.add_argument("--frame-dim", type=int, default=settings.CORPUS_FRAME_DIM)
    gen.add_argument("--speakers", type=int, default=settings.CORPUS_N_SPEAKERS)
    gen.add_argument("--sigma", type=float, default=settings.CORPUS_NOISE_STD)
    gen.add_argument("--min-tokens", type=int, default=settings.CORPUS_MIN_TOKENS)
    gen.add_argument("--max-tokens", type=int, default=settings.CORPUS_MAX_TOKENS)
    gen.add_argument("--n-train", type=int, default=settings.CORPUS_N_TRAIN)
    gen.add_argument("--n-test", type=int, default=settings.CORPUS_N_TEST)
    gen.add_argument("--check-items", type=int, default=1000, help="Test items used by the oracle self-check")

    train = sub.add_parser("train", help="Train a model on a corpus")
    _add_common(train)
    _add_model_args(train)
    _add_train_args(train)
    train.add_argument("--task-mix", choices=TASK_MIXES, default="joint")
    train.add_argument("--lambda", dest="lambda_lm", type=float, default=None,
                       help=f"Recognition loss weight (default {settings.TRAIN_LAMBDA_LM}; joint only)")
    train.add_argument("--tts-mask", choices=TTS_MASKS, default="full")
    train.add_argument("--plot", action="store_true", help="Also write a PNG of the loss curves")

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on a corpus test split")
    _add_common(ev)
    _add_sampler_args(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--tasks", default="asr,tts", help="Comma-separated subset of asr,tts")
    ev.add_argument("--items", type=int, default=None, help="Evaluate only the first N test items")
    ev.add_argument("--curves", default=None, help="Metrics log to export as CSV curves")

    synth = sub.add_parser("synth", help="Clone a reference voice onto new text")
    _add_common(synth)
    _add_sampler_args(synth)
    synth.add_argument("--checkpoint", required=True)
    synth.add_argument("--ref-frames", required=True, help="Frame file of the reference")
    synth.add_argument("--ref-tokens", required=True, help="Reference transcript, e.g. '5,9,2'")
    synth.add_argument("--gen-tokens", required=True, help="Text to generate, e.g. '7,7,3'")

    ablate = sub.add_parser("ablate", help="Train and compare the arms of an ablation study")
    _add_common(ablate)
    _add_model_args(ablate)
    _add_train_args(ablate)
    ablate.add_argument("--study", required=True, help="Study id from config/ExperimentConfig.json")
    ablate.add_argument("--experiments", default=settings.EXPERIMENT_CONFIG_PATH)

    return parser


# ----------------------------------------------------------------------
# Config resolution
# ----------------------------------------------------------------------

def _usage(fn, *args, **kwargs):
    """Build a config from flags, reporting invalid values as usage errors."""
    try:
        return fn(*args, **kwargs)
    except ConfigError as e:
        raise UsageError(str(e)) from e


def resolve_model_config(args: argparse.Namespace, vocab_size: int, frame_dim: int) -> ModelConfig:
    return _usage(ModelConfig, d_model=args.d_model, n_heads=args.heads, n_layers=args.layers,
                  vocab_size=vocab_size, frame_dim=frame_dim, max_positions=args.max_positions,
                  adapter_pool=args.adapter_pool, tie_embeddings=not args.untied)


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    task_mix = getattr(args, "task_mix", "joint")
    lambda_lm = getattr(args, "lambda_lm", None)
    tts_mask = getattr(args, "tts_mask", "full")
    if lambda_lm is not None and task_mix != "joint":
        raise UsageError("--lambda only applies to --task-mix joint")
    if tts_mask == "causal" and task_mix == "asr_only":
        raise UsageError("--tts-mask has no effect with --task-mix asr_only")
    if args.resume and args.force:
        raise UsageError("--resume and --force are mutually exclusive")
    warmup = args.warmup if args.warmup is not None else min(settings.TRAIN_WARMUP_STEPS, args.steps)
    return _usage(
        TrainConfig,
        lambda_lm=settings.TRAIN_LAMBDA_LM if lambda_lm is None else lambda_lm,
        lr_peak=args.lr, warmup_steps=warmup, total_steps=args.steps, batch_items=args.batch,
        weight_decay=args.weight_decay, grad_clip=args.grad_clip, seed=args.seed,
        task_mix=task_mix, tts_mask=tts_mask, log_every=args.log_every, eval_every=args.eval_every,
        eval_items=args.eval_items, eval_nfe=args.eval_nfe, checkpoint_every=args.checkpoint_every,
    )


def resolve_sampler(args: argparse.Namespace) -> SamplerConfig:
    return _usage(SamplerConfig, nfe=args.nfe, cfg_weight=args.cfg_weight, scheme=args.scheme, seed=args.seed)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def oracle_self_check(corpus, items: int) -> float:
    """Mean oracle token accuracy over the first `items` test examples."""
    examples = corpus.test[:max(1, items)]
    scores = [token_accuracy(oracle_decode(ex.frames, corpus.spec).tokens, ex.tokens) for ex in examples]
    return float(np.mean(scores))


def cmd_gen_data(args: argparse.Namespace, argv: Sequence[str]) -> int:
    spec = _usage(SynthSpec, vocab_size=args.vocab_size, frames_per_token=args.frames_per_token,
                  frame_dim=args.frame_dim, n_speakers=args.speakers, noise_std=args.sigma, seed=args.seed,
                  min_tokens=args.min_tokens, max_tokens=args.max_tokens)
    if args.n_train < 1 or args.n_test < 1:
        raise UsageError("--n-train and --n-test must be >= 1")
    config = {**spec.to_dict(), "n_train": args.n_train, "n_test": args.n_test}
    with RunDirectory(args.out, argv, config, force=args.force) as run:
        corpus = generate_corpus(spec, args.n_train, args.n_test, progress=not args.quiet)
        digest = save_corpus(corpus, args.out, force=True)
        accuracy = oracle_self_check(corpus, args.check_items)
        run.update(corpus_sha256=digest, oracle_accuracy=accuracy)
    print(f"corpus: {args.out}")
    print(f"  V={spec.vocab_size} D={spec.frame_dim} r={spec.frames_per_token} S={spec.n_speakers} "
          f"sigma={spec.noise_std} seed={spec.seed}")
    print(f"  train={len(corpus.train)} test={len(corpus.test)} sha256={digest}")
    print(f"  oracle self-check: {accuracy * 100:.2f}% token accuracy")
    return 0


def _load_corpus_for_training(path: str):
    corpus = load_corpus(path)
    return corpus, corpus_hash(path)


def cmd_train(args: argparse.Namespace, argv: Sequence[str]) -> int:
    train_cfg = resolve_train_config(args)
    corpus, digest = _load_corpus_for_training(args.corpus)
    model_cfg = resolve_model_config(args, corpus.spec.vocab_size, corpus.spec.frame_dim)
    config = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "corpus": args.corpus}
    if args.resume and not os.path.isfile(os.path.join(args.out, settings.CHECKPOINT_NAME)):
        raise DataError(f"--resume: no checkpoint in '{args.out}'")

    with RunDirectory(args.out, argv, config, force=args.force, reuse=args.resume) as run:
        run.update(corpus_sha256=digest)
        trainer = Trainer(model_cfg, train_cfg, corpus, args.out, progress=not args.quiet)
        logger.info(f"Training {trainer.model.num_parameters()} parameters for {train_cfg.total_steps} steps "
                    f"(task_mix={train_cfg.task_mix}, lambda={train_cfg.lambda_lm}, tts_mask={train_cfg.tts_mask})")
        result = trainer.train_run(resume=args.resume)
        run.update(checkpoint_sha256=result.checkpoint_sha256, final_step=result.step,
                   final_losses=result.losses, final_eval=result.eval_metrics)
        curves = ReportGenerator.export_curves(trainer.metrics_path, os.path.join(args.out, "curves.csv"))
        if args.plot:
            ReportGenerator.plot_curves(curves, os.path.join(args.out, "curves.png"))
    print(f"checkpoint: {result.checkpoint_path} (step {result.step}, sha256 {result.checkpoint_sha256})")
    return 0


def cmd_eval(args: argparse.Namespace, argv: Sequence[str]) -> int:
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    if not tasks or any(t not in ("asr", "tts") for t in tasks):
        raise UsageError(f"--tasks must be a subset of asr,tts, got '{args.tasks}'")
    sampler = resolve_sampler(args)
    model, metadata = load_model(args.checkpoint)
    corpus = load_corpus(args.corpus)
    problems = check_compatible(model.cfg.frame_dim, model.cfg.vocab_size, corpus.spec)
    if problems:
        raise ConfigError("checkpoint and corpus are incompatible: " + "; ".join(problems))
    examples = corpus.test[:args.items] if args.items else corpus.test
    context = {
        "checkpoint": args.checkpoint,
        "checkpoint_sha256": file_sha256(args.checkpoint),
        "checkpoint_step": metadata.get("step"),
        "corpus_sha256": corpus_hash(args.corpus),
        "items": len(examples),
        "sampler": {"nfe": sampler.nfe, "cfg_weight": sampler.cfg_weight, "scheme": sampler.scheme,
                    "seed": sampler.seed},
        "tts_mask": args.tts_mask,
        "tasks": tasks,
    }
    with RunDirectory(args.out, argv, context, force=args.force):
        report = evaluate_model(model, corpus.spec, examples, sampler, tasks=tasks, mask_mode=args.tts_mask,
                                progress=not args.quiet)
        path = ReportGenerator.generate_eval_report(report, os.path.join(args.out, "eval_report.json"), context)
        if args.curves:
            ReportGenerator.export_curves(args.curves, os.path.join(args.out, "curves.csv"))
    for task, splits in report.items():
        for split, values in splits.items():
            shown = " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
            print(f"{task:>3} {split:>6}: {shown}")
    print(f"report: {path}")
    return 0


def cmd_synth(args: argparse.Namespace, argv: Sequence[str]) -> int:
    sampler = resolve_sampler(args)
    ref_tokens = parse_token_list(args.ref_tokens)
    gen_tokens = parse_token_list(args.gen_tokens)
    if not ref_tokens or not gen_tokens:
        raise UsageError("--ref-tokens and --gen-tokens must be non-empty")
    model, _ = load_model(args.checkpoint)
    for tok in ref_tokens + gen_tokens:
        if not 0 <= tok < model.cfg.vocab_size:
            raise DataError(f"token {tok} outside the model vocabulary [0, {model.cfg.vocab_size})")
    ref_frames = read_frames(args.ref_frames)
    config = {
        "checkpoint": args.checkpoint,
        "checkpoint_sha256": file_sha256(args.checkpoint),
        "ref_frames": args.ref_frames,
        "ref_tokens": ref_tokens,
        "gen_tokens": gen_tokens,
        "sampler": {"nfe": sampler.nfe, "cfg_weight": sampler.cfg_weight, "scheme": sampler.scheme,
                    "seed": sampler.seed},
        "tts_mask": args.tts_mask,
    }
    with RunDirectory(args.out, argv, config, force=args.force) as run:
        request = TtsInferenceRequest(ref_frames=ref_frames, ref_text=ref_tokens, gen_text=gen_tokens, sampler=sampler)
        frames = synthesize(model, request, mask_mode=args.tts_mask)
        out_path = os.path.join(args.out, "frames.uvfm")
        write_frames(out_path, frames)
        run.update(output=out_path, output_rows=int(frames.shape[0]))
    print(f"frames: {out_path} ({frames.shape[0]}×{frames.shape[1]})")
    return 0


def cmd_ablate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    studies = load_studies(args.experiments)
    if args.study not in studies:
        raise UsageError(f"unknown study '{args.study}'; available: {sorted(studies)}")
    base_cfg = resolve_train_config(args)
    corpus, digest = _load_corpus_for_training(args.corpus)
    model_cfg = resolve_model_config(args, corpus.spec.vocab_size, corpus.spec.frame_dim)
    config = {"model": model_cfg.to_dict(), "train": base_cfg.to_dict(), "study": studies[args.study],
              "corpus": args.corpus}
    with RunDirectory(args.out, argv, config, force=args.force, reuse=args.resume) as run:
        run.update(corpus_sha256=digest)
        runner = AblationRunner(studies[args.study], model_cfg, base_cfg, corpus, args.out,
                                progress=not args.quiet)
        comparison = runner.run(resume=args.resume)
        run.update(claims=comparison["claims"])
    for row in comparison["table"]:
        shown = " ".join(f"{k}={v:.4f}" for k, v in row.items() if isinstance(v, float))
        print(f"{row['arm']:>14}: {shown}")
    for claim, holds in comparison["claims"].items():
        print(f"{claim}: {'holds' if holds else 'does not hold'}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args, ["dualmask"] + argv)
    except DualMaskError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted; rerun with --resume to continue from the last checkpoint")
        return 130
