"""
Flow matching on a two-dimensional Gaussian mixture, no text and no context.

Each sample is a single frame, so every training span covers the whole
sequence and the generation pack reduces to [NULL][TIME][FRAME].
"""

import unittest

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from core.flow.sampler import SamplerConfig, ode_sample
from core.model.config import ModelConfig
from core.model.transformer import UnifiedTransformer
from core.tasks.tts import build_tts_condition_pack
from core.train.config import TrainConfig
from core.train.optimizer import TrainState, optimizer_step
from core.train.schedule import lr_at
from core.train.trainer import joint_loss
from tests.base_numeric_test import BaseNumericTest
from tests.config.acceptance_config import EXPERIMENTS, THRESHOLDS

MEANS = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
STD = 0.3


def draw_mixture(rng: np.random.Generator, n: int) -> np.ndarray:
    component = rng.integers(0, len(MEANS), size=n)
    return MEANS[component] + STD * rng.standard_normal((n, 2))


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(2.0 * cdist(a, b).mean() - cdist(a, a).mean() - cdist(b, b).mean())


@pytest.mark.slow
class TestFlowMatching2D(BaseNumericTest):

    def test_mixture_energy_distance(self):
        model = UnifiedTransformer(ModelConfig(d_model=32, n_heads=2, n_layers=2, vocab_size=3,
                                               frame_dim=2, max_positions=4, adapter_pool=1), seed=0)
        cfg = TrainConfig(total_steps=EXPERIMENTS.gmm_steps, warmup_steps=EXPERIMENTS.gmm_steps // 20,
                          lr_peak=1e-3, weight_decay=0.0, batch_items=EXPERIMENTS.gmm_batch)
        state = TrainState.fresh({name: p.data for name, p in model.params.items()})
        rng = np.random.default_rng(0)

        self.start_timer()
        for _ in range(cfg.total_steps):
            batch = [(x[None, :], []) for x in draw_mixture(rng, cfg.batch_items)]
            model.zero_grad()
            total, _ = joint_loss(model, [], batch, 0.0, rng)
            total.backward()
            grads = {name: p.grad for name, p in model.params.items()}
            optimizer_step(state, grads, cfg, lr_at(state.step + 1, cfg))
        self.log_metric("training", f"{self.stop_timer():.1f}", "s")

        ctx = np.zeros((1, 2), dtype=model.dtype)
        generated = np.concatenate([
            ode_sample(model, ctx, [], 1, SamplerConfig(nfe=EXPERIMENTS.eval_nfe, cfg_weight=1.0, seed=i),
                       build_tts_condition_pack)
            for i in range(EXPERIMENTS.gmm_samples)
        ]).astype(np.float64)
        reference = draw_mixture(np.random.default_rng(1), EXPERIMENTS.gmm_samples)
        distance = energy_distance(generated, reference)
        self.log_metric("energy distance", f"{distance:.4f}")
        self.assertLess(distance, THRESHOLDS.energy_distance)


if __name__ == '__main__':
    unittest.main()
