"""
Long training experiments on the toy corpus.

These take from minutes (overfit oracle) to hours (full joint run) and are
deselected by default; run them with `pytest -m slow tests/acceptance`.
"""

import os
import tempfile
import unittest

import pytest

from core.data.metrics import token_accuracy
from core.data.oracle import oracle_decode
from core.data.synth import SynthSpec, generate_corpus
from core.evaluation.evaluator import evaluate_model
from core.experiments import AblationRunner, load_studies
from core.flow.sampler import SamplerConfig
from core.model.config import ModelConfig
from core.train.config import TrainConfig
from core.train.trainer import Trainer
from tests.base_numeric_test import BaseNumericTest
from tests.config.acceptance_config import EXPERIMENTS, THRESHOLDS


def standard_spec() -> SynthSpec:
    V, D, r, S = EXPERIMENTS.corpus_dims
    return SynthSpec(vocab_size=V, frame_dim=D, frames_per_token=r, n_speakers=S)


class TestOracleSelfCheck(BaseNumericTest):

    def test_clean_decoding_on_standard_corpus(self):
        corpus = generate_corpus(standard_spec(), 500, 1)
        correct = sum(token_accuracy(oracle_decode(ex.frames, corpus.spec).tokens, ex.tokens)
                      for ex in corpus.train)
        self.assertGreaterEqual(correct / len(corpus.train), THRESHOLDS.oracle_accuracy)


@pytest.mark.slow
class TestOverfitOracle(BaseNumericTest):

    def test_eight_items(self):
        corpus = generate_corpus(standard_spec(), EXPERIMENTS.overfit_items, 1)
        model_cfg = ModelConfig(d_model=64, n_heads=4, n_layers=2)
        cfg = TrainConfig(total_steps=EXPERIMENTS.overfit_steps, warmup_steps=100, lr_peak=1e-3,
                          weight_decay=0.0, batch_items=EXPERIMENTS.overfit_items,
                          eval_every=EXPERIMENTS.overfit_steps, eval_items=EXPERIMENTS.overfit_items,
                          log_every=100)
        with tempfile.TemporaryDirectory() as tmp:
            trainer = Trainer(model_cfg, cfg, corpus, tmp, eval_examples=corpus.train)
            trainer.train_run()
        report = evaluate_model(trainer.model, corpus.spec, corpus.train,
                                SamplerConfig(nfe=EXPERIMENTS.eval_nfe))
        self.log_metric("asr accuracy", report["asr"]["all"]["accuracy"])
        self.log_metric("tts mse", report["tts"]["all"]["mse"])
        self.assertGreaterEqual(report["asr"]["all"]["accuracy"], THRESHOLDS.overfit_asr_accuracy)
        self.assertLess(report["tts"]["all"]["mse"], THRESHOLDS.overfit_tts_mse)


@pytest.mark.slow
class TestJointTraining(BaseNumericTest):

    def test_default_run_meets_thresholds(self):
        corpus = generate_corpus(standard_spec(), EXPERIMENTS.corpus_train, EXPERIMENTS.corpus_test)
        cfg = TrainConfig(total_steps=EXPERIMENTS.joint_steps)
        self.start_timer()
        with tempfile.TemporaryDirectory() as tmp:
            trainer = Trainer(ModelConfig(), cfg, corpus, tmp)
            trainer.train_run()
        self.log_metric("training", f"{self.stop_timer() / 3600:.2f}", "h")

        report = evaluate_model(trainer.model, corpus.spec, corpus.test[:EXPERIMENTS.eval_items],
                                SamplerConfig(nfe=EXPERIMENTS.eval_nfe))
        asr, tts = report["asr"], report["tts"]
        for split in ("all", "seen", "unseen"):
            self.log_metric(f"{split} asr_ter", asr[split]["ter"])
            self.log_metric(f"{split} tts_ter", tts[split]["ter"])
            self.log_metric(f"{split} similarity", tts[split]["similarity"])

        self.assertLess(asr["all"]["ter"], THRESHOLDS.asr_ter)
        self.assertLess(tts["all"]["ter"], THRESHOLDS.cloning_ter)
        self.assertGreaterEqual(tts["unseen"]["similarity"], THRESHOLDS.unseen_similarity)
        self.assertLessEqual(abs(tts["seen"]["similarity"] - tts["unseen"]["similarity"]),
                             THRESHOLDS.similarity_gap)


@pytest.mark.slow
class TestAblationDirections(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.corpus = generate_corpus(standard_spec(), EXPERIMENTS.corpus_train, EXPERIMENTS.corpus_test)
        self.base_cfg = TrainConfig(total_steps=EXPERIMENTS.ablation_steps, warmup_steps=300,
                                    eval_every=EXPERIMENTS.ablation_steps)
        self.studies = load_studies()

    def _run(self, study_id):
        with tempfile.TemporaryDirectory() as tmp:
            runner = AblationRunner(self.studies[study_id], ModelConfig(), self.base_cfg, self.corpus,
                                    os.path.join(tmp, study_id), eval_items=EXPERIMENTS.eval_items,
                                    sampler=SamplerConfig(nfe=EXPERIMENTS.eval_nfe))
            comparison = runner.run()
        for claim, holds in comparison["claims"].items():
            self.log_metric(claim, holds)
        return comparison

    def test_full_mask_beats_causal(self):
        claims = self._run("mask")["claims"]
        self.assertTrue(claims["full_mask_lower_tts_ter"])
        self.assertTrue(claims["full_mask_lower_tts_mse"])

    def test_small_lambda_recognizes_better_without_hurting_generation(self):
        claims = self._run("lambda")["claims"]
        self.assertTrue(claims["lambda_0.005_lower_asr_ter"])
        self.assertTrue(claims["lambda_0.05_not_better_tts_mse"])


if __name__ == '__main__':
    unittest.main()
