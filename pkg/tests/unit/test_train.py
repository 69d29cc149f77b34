import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from config import settings
from core.errors import ConfigError, ContractViolation, DimensionError, DomainError, NumericAbort
from core.logging_config import parse_metrics_log
from core.numerics.tensor import Tensor, precision
from core.tasks.asr import AsrExample, asr_loss
from core.tasks.tts import tts_train_loss
from core.train.checkpoint import load_checkpoint, save_checkpoint
from core.train.config import TrainConfig
from core.train.optimizer import TrainState, global_grad_norm, optimizer_step
from core.train.schedule import lr_at
from core.train.trainer import Trainer, joint_loss, load_model
from tests.base_numeric_test import BaseNumericTest


class TestTrainConfig(unittest.TestCase):

    def test_validation(self):
        for bad in (dict(lambda_lm=-1.0), dict(warmup_steps=20, total_steps=10), dict(task_mix="both"),
                    dict(tts_mask="sparse"), dict(betas=(0.9, 1.0)), dict(batch_items=0)):
            with self.assertRaises(ConfigError):
                TrainConfig(**bad)

    def test_roundtrip(self):
        cfg = TrainConfig(lambda_lm=0.05, task_mix="tts_only", tts_mask="causal")
        self.assertEqual(TrainConfig.from_dict(cfg.to_dict()), cfg)
        self.assertFalse(cfg.trains_asr)
        self.assertTrue(cfg.trains_tts)


class TestSchedule(unittest.TestCase):

    def setUp(self):
        self.cfg = TrainConfig(lr_peak=1e-3, warmup_steps=10, total_steps=100)

    def test_anchor_points(self):
        self.assertEqual(lr_at(0, self.cfg), 0.0)
        self.assertAlmostEqual(lr_at(5, self.cfg), 5e-4)
        self.assertAlmostEqual(lr_at(10, self.cfg), 1e-3)
        self.assertAlmostEqual(lr_at(100, self.cfg), 1e-5)

    def test_monotone(self):
        values = [lr_at(s, self.cfg) for s in range(101)]
        self.assertTrue(all(a <= b for a, b in zip(values[:10], values[1:11])))
        self.assertTrue(all(a >= b for a, b in zip(values[10:], values[11:])))

    def test_warmup_to_end(self):
        cfg = TrainConfig(lr_peak=1e-3, warmup_steps=10, total_steps=10)
        self.assertAlmostEqual(lr_at(10, cfg), 1e-5)
        self.assertAlmostEqual(lr_at(0, TrainConfig(lr_peak=1e-3, warmup_steps=0, total_steps=10)), 1e-3)

    def test_out_of_range(self):
        with self.assertRaises(DomainError):
            lr_at(101, self.cfg)
        with self.assertRaises(DomainError):
            lr_at(-1, self.cfg)


class TestOptimizer(unittest.TestCase):

    def _state(self, **params):
        return TrainState.fresh({k: np.asarray(v, dtype=np.float64) for k, v in params.items()})

    def test_zero_gradient_is_a_no_op(self):
        cfg = TrainConfig(weight_decay=0.0)
        state = self._state(w=np.ones((2, 3)), b=np.zeros(3))
        before = {k: v.copy() for k, v in state.parameters.items()}
        optimizer_step(state, {"w": np.zeros((2, 3)), "b": None}, cfg, lr=0.1)
        for k in before:
            np.testing.assert_array_equal(state.parameters[k], before[k])
        self.assertEqual(state.step, 1)

    def test_first_step_moves_by_lr(self):
        state = self._state(p=[1.0])
        optimizer_step(state, {"p": np.array([1.0])}, TrainConfig(weight_decay=0.0), lr=0.1)
        self.assertAlmostEqual(float(state.parameters["p"][0]), 0.9, places=6)

    def test_decoupled_decay_only_on_matrices(self):
        state = self._state(w=np.ones((2, 2)), g=np.ones(2))
        optimizer_step(state, {"w": np.zeros((2, 2)), "g": np.zeros(2)}, TrainConfig(weight_decay=0.1), lr=0.1)
        np.testing.assert_allclose(state.parameters["w"], 0.99)
        np.testing.assert_array_equal(state.parameters["g"], 1.0)

    def test_clipping_bounds_first_moment(self):
        state = self._state(p=[0.0, 0.0])
        optimizer_step(state, {"p": np.array([30.0, 40.0])}, TrainConfig(weight_decay=0.0, grad_clip=1.0), lr=0.0)
        np.testing.assert_allclose(state.exp_avg["p"], 0.1 * np.array([0.6, 0.8]))
        self.assertEqual(global_grad_norm({"p": np.array([3.0, 4.0]), "q": None}), 5.0)

    def test_non_finite_gradient_aborts(self):
        state = self._state(w=np.ones((2, 2)))
        with self.assertRaises(NumericAbort) as ctx:
            optimizer_step(state, {"w": np.array([[1.0, np.nan], [0.0, 0.0]])}, TrainConfig(), lr=0.1)
        self.assertEqual(ctx.exception.parameter, "w")
        self.assertEqual(ctx.exception.step, 0)
        np.testing.assert_array_equal(state.parameters["w"], 1.0)

    def test_shape_mismatch(self):
        state = self._state(w=np.ones((2, 2)))
        with self.assertRaises(DimensionError):
            optimizer_step(state, {"w": np.ones(3)}, TrainConfig(), lr=0.1)

    def test_loss_statistics(self):
        state = self._state(p=[0.0])
        state.record_loss("asr", 2.0)
        state.record_loss("asr", 1.0)
        self.assertEqual(state.loss_stats["asr"]["count"], 2)
        self.assertAlmostEqual(state.loss_stats["asr"]["ema"], 0.98 * 2.0 + 0.02 * 1.0)


class TestJointLoss(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.model = self.tiny_model(seed=11, n_layers=1)
        rng = np.random.default_rng(0)
        self.frames = rng.normal(size=(6, 4))
        self.asr = [AsrExample(self.frames, [3, 4, 5, settings.EOS_TOKEN])]
        self.tts = [(self.frames, [3, 4, 5])]

    def test_weighted_sum(self):
        with mock.patch("core.train.trainer.asr_loss", return_value=Tensor(2.0, dtype=np.float64)), \
                mock.patch("core.train.trainer.tts_train_loss", return_value=Tensor(1.0, dtype=np.float64)):
            total, parts = joint_loss(None, self.asr, self.tts, 0.005, np.random.default_rng(0))
        self.assertAlmostEqual(total.item(), 1.01, places=12)
        self.assertEqual(parts, {"asr": 2.0, "tts": 1.0})

    def test_zero_lambda_is_tts_only(self):
        with precision(np.float64):
            total, parts = joint_loss(self.model, self.asr, self.tts, 0.0, np.random.default_rng(3))
        self.assertEqual(total.item(), parts["tts"])

    def test_gradient_linearity(self):
        lam = 0.3
        with precision(np.float64):
            self.model.zero_grad()
            total, _ = joint_loss(self.model, self.asr, self.tts, lam, np.random.default_rng(5))
            total.backward()
            combined = {n: p.grad.copy() for n, p in self.model.params.items() if p.grad is not None}

            self.model.zero_grad()
            asr_loss(self.model, self.asr[0]).backward()
            separate = {n: lam * p.grad for n, p in self.model.params.items() if p.grad is not None}
            self.model.zero_grad()
            tts_train_loss(self.model, self.frames, [3, 4, 5], np.random.default_rng(5)).backward()
            for n, p in self.model.params.items():
                if p.grad is not None:
                    separate[n] = separate.get(n, 0.0) + p.grad
        self.assertEqual(set(combined), set(separate))
        for name in combined:
            np.testing.assert_allclose(combined[name], separate[name], rtol=1e-10, atol=1e-12, err_msg=name)

    def test_empty_batches(self):
        with self.assertRaises(ContractViolation):
            joint_loss(self.model, [], [], 0.005, np.random.default_rng(0))


class TestCheckpoint(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_save_load_save_is_byte_identical(self):
        trainer = Trainer(self.tiny_config(), self.tiny_train_config(), self.tiny_corpus(), self.tmp.name)
        trainer.train_step()
        first = os.path.join(self.tmp.name, "a.uvck")
        second = os.path.join(self.tmp.name, "b.uvck")
        sha_a = save_checkpoint(first, trainer.to_checkpoint())
        sha_b = save_checkpoint(second, load_checkpoint(first))
        self.assertEqual(sha_a, sha_b)
        with open(first, "rb") as f, open(second, "rb") as g:
            self.assertEqual(f.read(), g.read())
        self.assertFalse(os.path.exists(first + ".tmp"))

    def test_load_model(self):
        trainer = Trainer(self.tiny_config(), self.tiny_train_config(), self.tiny_corpus(), self.tmp.name)
        trainer.save()
        model, metadata = load_model(trainer.checkpoint_path)
        self.assertEqual(metadata["step"], 0)
        for name, p in trainer.model.params.items():
            np.testing.assert_array_equal(model.params[name].data, p.data)


class TestTrainer(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.corpus = self.tiny_corpus()

    def _run_dir(self, name):
        path = os.path.join(self.tmp.name, name)
        os.makedirs(path)
        return path

    def test_rejects_mismatched_corpus(self):
        with self.assertRaises(ConfigError):
            Trainer(self.tiny_config(frame_dim=8), self.tiny_train_config(), self.corpus, self._run_dir("x"))

    def test_asr_only_leaves_generation_weights_untouched(self):
        trainer = Trainer(self.tiny_config(), self.tiny_train_config(task_mix="asr_only"), self.corpus,
                          self._run_dir("asr"))
        before = {n: p.data.copy() for n, p in trainer.model.params.items()}
        record = trainer.train_step()
        self.assertNotIn("tts_loss", record)
        for name in ("velocity_head.w", "velocity_head.b", "frame_in.w", "frame_in.b", "time_proj.w"):
            self.assertIsNone(trainer.model.params[name].grad, name)
        np.testing.assert_array_equal(trainer.model.params["velocity_head.b"].data, before["velocity_head.b"])
        self.assertFalse(np.array_equal(trainer.model.params["adapter.w"].data, before["adapter.w"]))

    def test_resume_matches_uninterrupted_run(self):
        cfg = self.tiny_train_config()
        straight = Trainer(self.tiny_config(), cfg, self.corpus, self._run_dir("straight"))
        result_a = straight.train_run()

        resumed_dir = self._run_dir("resumed")
        first_half = Trainer(self.tiny_config(), cfg, self.corpus, resumed_dir)
        for _ in range(3):
            first_half.train_step()
        first_half.save()
        second_half = Trainer(self.tiny_config(), cfg, self.corpus, resumed_dir)
        result_b = second_half.train_run(resume=True)

        self.assertEqual(result_b.step, 6)
        self.assertEqual(result_a.losses, result_b.losses)
        self.assertEqual(result_a.checkpoint_sha256, result_b.checkpoint_sha256)
        for name, p in straight.model.params.items():
            np.testing.assert_array_equal(second_half.model.params[name].data, p.data)

    def test_identical_runs_write_identical_logs(self):
        logs = []
        for name in ("one", "two"):
            trainer = Trainer(self.tiny_config(), self.tiny_train_config(total_steps=3, warmup_steps=1),
                              self.corpus, self._run_dir(name), eval_examples=self.corpus.train[:3])
            trainer.train_run()
            with open(trainer.metrics_path, "r", encoding="utf-8") as f:
                logs.append(f.read())
        self.assertEqual(logs[0], logs[1])
        records = parse_metrics_log(trainer.metrics_path)
        self.assertEqual([r["event"] for r in records], ["train", "train", "train", "eval"])
        self.assertEqual(records[0]["step"], 1)
        self.assertEqual(records[0]["task"], "joint")
        self.assertIn("asr_ter", records[-1])
        self.assertIn("tts_mse", records[-1])

    def test_periodic_checkpoints(self):
        trainer = Trainer(self.tiny_config(), self.tiny_train_config(checkpoint_every=2, total_steps=4),
                          self.corpus, self._run_dir("periodic"))
        result = trainer.train_run()
        self.assertTrue(os.path.isfile(result.checkpoint_path))
        self.assertEqual(load_checkpoint(result.checkpoint_path).metadata["step"], 4)


if __name__ == '__main__':
    unittest.main()
