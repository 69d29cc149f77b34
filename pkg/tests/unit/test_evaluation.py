import json
import os
import tempfile
import unittest
from unittest import mock

import numpy as np
import pandas as pd

from core.data.synth import SynthExample, SynthSpec
from core.errors import ConfigError, ContractViolation
from core.evaluation.evaluator import (check_compatible, cloning_records, evaluate_model, flatten_metrics,
                                      pick_reference)
from core.evaluation.report import ReportGenerator
from core.experiments import AblationRunner, directional_claims, load_studies
from core.flow.sampler import SamplerConfig
from core.logging_config import MetricsLogger
from tests.base_numeric_test import BaseNumericTest


def _example(speaker):
    return SynthExample(tokens=[2, 3], speaker_id=speaker, frames=np.zeros((4, 4), dtype=np.float32))


class TestPickReference(unittest.TestCase):

    def test_next_same_speaker_cyclically(self):
        items = [_example(s) for s in (0, 1, 0, 2, 1)]
        self.assertEqual(pick_reference(items, 0), 2)
        self.assertEqual(pick_reference(items, 2), 0)
        self.assertEqual(pick_reference(items, 4), 1)
        self.assertIsNone(pick_reference(items, 3))


class TestEvaluateModel(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.corpus = self.tiny_corpus()
        self.model = self.tiny_model(seed=12, dtype=np.float32)
        self.sampler = SamplerConfig(nfe=1, seed=0)

    def test_report_shape_and_determinism(self):
        items = self.corpus.test
        a = evaluate_model(self.model, self.corpus.spec, items, self.sampler)
        b = evaluate_model(self.model, self.corpus.spec, items, self.sampler)
        self.assertEqual(json.dumps(a, sort_keys=True), json.dumps(b, sort_keys=True))
        self.assertEqual(a["asr"]["all"]["count"], len(items))
        self.assertEqual(a["asr"]["seen"]["count"] + a["asr"]["unseen"]["count"], len(items))
        self.assertIn("similarity", a["tts"]["all"])

    def test_untrained_model_recognizes_nothing(self):
        report = evaluate_model(self.model, self.corpus.spec, self.corpus.test, self.sampler, tasks=["asr"])
        self.assertNotIn("tts", report)
        self.assertGreater(report["asr"]["all"]["ter"], 0.5)

    def test_degenerate_similarity_is_counted(self):
        items = self.corpus.train[:6]
        with mock.patch("core.evaluation.evaluator.speaker_similarity",
                        side_effect=ContractViolation("zero-norm")):
            with self.assertLogs("core.evaluation.evaluator", level="WARNING") as logs:
                frame = cloning_records(self.model, self.corpus.spec, items, self.sampler)
        self.assertGreaterEqual(len(frame), 3)
        self.assertTrue((frame["similarity"] == 0.0).all())
        self.assertTrue(any(f"{len(frame)} items had a degenerate speaker estimate" in line
                            for line in logs.output))

    def test_flatten(self):
        report = {"asr": {"all": {"count": 3, "ter": 0.5, "accuracy": 0.5}},
                  "tts": {"all": {"count": 0, "ter": None, "mse": None}}}
        self.assertEqual(flatten_metrics(report), {"asr_ter": 0.5, "asr_accuracy": 0.5})

    def test_compatibility(self):
        spec = SynthSpec(frame_dim=16, vocab_size=32)
        self.assertEqual(check_compatible(16, 32, spec), [])
        problems = check_compatible(8, 16, spec)
        self.assertEqual(len(problems), 2)
        self.assertIn("frame_dim", problems[0])


class TestReportGenerator(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_eval_report_notes(self):
        metrics = {"tts": {"seen": {"similarity": 0.9}, "unseen": {"similarity": 0.5}},
                   "asr": {"all": {"truncated": 2}}}
        path = ReportGenerator.generate_eval_report(metrics, os.path.join(self.tmp.name, "r", "eval.json"),
                                                    context={"seed": 0})
        with open(path, encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(report["context"], {"seed": 0})
        self.assertEqual(len(report["notes"]), 2)

    def test_compare_arms(self):
        arms = {"base": {"asr_ter": 0.2, "tts_mse": 0.1, "tts_similarity": 0.8},
                "alt": {"asr_ter": 0.3, "tts_mse": 0.1, "tts_similarity": 0.9}}
        out = ReportGenerator.compare_arms(arms, "base", ["asr_ter", "tts_mse", "tts_similarity", "tts_ter"])
        self.assertEqual(out["verdicts"], {"alt": {"asr_ter": "worse", "tts_mse": "equal",
                                                   "tts_similarity": "better", "tts_ter": "missing"}})
        self.assertEqual(len(out["table"]), 2)

    def test_export_and_plot_curves(self):
        log = os.path.join(self.tmp.name, "metrics.log")
        with MetricsLogger(log) as metrics:
            metrics.log("train", step=2, task="joint", loss=0.5, asr_loss=1.0, tts_loss=0.4)
            metrics.log("train", step=1, task="joint", loss=0.9, asr_loss=2.0, tts_loss=0.8)
            metrics.log("eval", step=2, task="joint", asr_ter=0.7)
        csv_path = os.path.join(self.tmp.name, "curves.csv")
        frame = ReportGenerator.export_curves(log, csv_path)
        self.assertEqual(list(frame["step"]), [1, 2, 2])
        self.assertEqual(list(frame["event"]), ["train", "eval", "train"])
        self.assertEqual(len(pd.read_csv(csv_path)), 3)
        png = ReportGenerator.plot_curves(frame, os.path.join(self.tmp.name, "curves.png"))
        self.assertTrue(os.path.isfile(png))


class TestStudies(BaseNumericTest):

    def test_builtin_studies(self):
        studies = load_studies()
        self.assertEqual(set(studies), {"lambda", "mask"})
        self.assertEqual(studies["lambda"]["baseline"], "lambda_0.005")
        self.assertEqual([a["id"] for a in studies["mask"]["arms"]], ["full_mask", "ar_mask"])

    def test_bad_study_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "studies.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"studies": [{"id": "x", "arms": [{"id": "a"}], "baseline": "b"}]}, f)
            with self.assertRaises(ConfigError):
                load_studies(path)
            with self.assertRaises(ConfigError):
                load_studies(os.path.join(tmp, "missing.json"))

    def test_claims(self):
        self.assertEqual(directional_claims("mask", {"ar_mask": {"tts_ter": "worse", "tts_mse": "better"}}),
                         {"full_mask_lower_tts_ter": True, "full_mask_lower_tts_mse": False})
        self.assertEqual(directional_claims("lambda", {"lambda_0.05": {"asr_ter": "worse", "tts_mse": "equal"}}),
                         {"lambda_0.005_lower_asr_ter": True, "lambda_0.05_not_better_tts_mse": True})
        self.assertEqual(directional_claims("lambda", {"lambda_0.05": {"asr_ter": "equal", "tts_mse": "better"}}),
                         {"lambda_0.005_lower_asr_ter": False, "lambda_0.05_not_better_tts_mse": False})
        self.assertFalse(directional_claims("lambda", {})["lambda_0.005_lower_asr_ter"])
        self.assertEqual(directional_claims("other", {}), {})

    def test_arm_overrides(self):
        studies = load_studies()
        runner = AblationRunner(studies["mask"], self.tiny_config(), self.tiny_train_config(),
                                self.tiny_corpus(), out_dir=tempfile.gettempdir())
        cfg = runner.arm_config(studies["mask"]["arms"][1])
        self.assertEqual((cfg.task_mix, cfg.tts_mask), ("tts_only", "causal"))
        self.assertEqual(cfg.total_steps, 6)
        with self.assertRaises(ConfigError):
            runner.arm_config({"id": "bad", "overrides": {"momentum": 0.9}})
        with self.assertRaises(ConfigError):
            runner.arm_config({"id": "bad", "overrides": {"tts_mask": "sparse"}})

    def test_run_writes_comparison(self):
        study = {"id": "mask", "baseline": "full_mask", "metric_focus": ["tts_mse"],
                 "arms": [{"id": "full_mask", "overrides": {"task_mix": "tts_only"}},
                          {"id": "ar_mask", "overrides": {"task_mix": "tts_only", "tts_mask": "causal"}}]}
        corpus = self.tiny_corpus()
        with tempfile.TemporaryDirectory() as tmp:
            runner = AblationRunner(study, self.tiny_config(), self.tiny_train_config(total_steps=2, warmup_steps=1),
                                    corpus, tmp, eval_items=4, sampler=SamplerConfig(nfe=1))
            runner.eval_examples = corpus.train[:3]
            report = runner.run()
            self.assertTrue(os.path.isfile(os.path.join(tmp, "ablation_report.json")))
            self.assertTrue(os.path.isfile(os.path.join(tmp, "ar_mask", "eval_report.json")))
        self.assertIn(report["verdicts"]["ar_mask"]["tts_mse"], ("better", "worse", "equal"))
        self.assertIn("full_mask_lower_tts_mse", report["claims"])


if __name__ == '__main__':
    unittest.main()
