"""
Randomized causality and cross-position influence checks over the full backbone.
"""

import unittest

import numpy as np

from core.model.masks import AttentionMask, Role
from core.model.packing import PackedSequence
from core.numerics.tensor import Tensor, no_grad
from tests.base_numeric_test import BaseNumericTest

TRIALS = 100


class TestMaskSoundness(BaseNumericTest):

    def setUp(self):
        super().setUp()
        self.model = self.tiny_model(seed=31, n_layers=2)
        self.rng = np.random.default_rng(123)

    def _forward(self, x, mask):
        with no_grad():
            pack = PackedSequence(Tensor(x, dtype=np.float64), [Role.TEXT] * x.shape[0])
            return self.model.forward_backbone(pack, mask).data

    def test_causal_prefix_is_bit_identical(self):
        for _ in range(TRIALS):
            L = int(self.rng.integers(2, 12))
            k = int(self.rng.integers(0, L - 1))
            x = self.rng.normal(size=(L, 16))
            y = x.copy()
            y[k + 1:] += self.rng.normal(scale=3.0, size=(L - k - 1, 16))
            mask = AttentionMask.causal(L)
            np.testing.assert_array_equal(self._forward(x, mask)[:k + 1], self._forward(y, mask)[:k + 1])

    def test_bidirectional_influence(self):
        for _ in range(TRIALS):
            L = int(self.rng.integers(2, 12))
            j = int(self.rng.integers(0, L))
            x = self.rng.normal(size=(L, 16))
            y = x.copy()
            y[j] += self.rng.normal(size=16)
            mask = AttentionMask.full(L)
            a, b = self._forward(x, mask), self._forward(y, mask)
            for i in range(L):
                self.assertFalse(np.array_equal(a[i], b[i]), f"row {i} ignored position {j} (L={L})")


if __name__ == '__main__':
    unittest.main()
