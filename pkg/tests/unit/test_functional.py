import unittest
from decimal import Decimal, getcontext

import numpy as np

from core.errors import ContractViolation, DimensionError
from core.numerics import functional as F
from core.numerics.tensor import Tensor, precision
from tests.base_numeric_test import BaseNumericTest

getcontext().prec = 50


def decimal_softmax(row, allow):
    exps = [Decimal(float(v)).exp() if a else Decimal(0) for v, a in zip(row, allow)]
    total = sum(exps)
    return [float(e / total) for e in exps]


def decimal_cross_entropy(logits, targets):
    losses = []
    for row, target in zip(logits, targets):
        lse = sum(Decimal(float(v)).exp() for v in row).ln()
        losses.append(lse - Decimal(float(row[target])))
    return float(sum(losses) / len(losses))


class TestSoftmax(BaseNumericTest):

    def test_matches_decimal_oracle(self):
        rng = np.random.default_rng(1)
        with precision(np.float64):
            x = Tensor(rng.normal(size=(4, 5)) * 3.0)
            allow = rng.random((4, 5)) < 0.6
            allow[np.arange(4), np.arange(4)] = True
            y = F.softmax_rows(x, allow)
        for i in range(4):
            np.testing.assert_allclose(y.data[i], decimal_softmax(x.data[i], allow[i]), atol=1e-12)

    def test_masked_entries_are_exact_zeros(self):
        x = Tensor([[1.0, 50.0, -3.0]])
        y = F.softmax_rows(x, np.array([[True, False, True]]))
        self.assertEqual(y.data[0, 1], 0.0)
        self.assertAlmostEqual(float(y.data.sum()), 1.0, places=6)

    def test_large_scores_are_stable(self):
        y = F.softmax_rows(Tensor([[1000.0, 1000.0]]), np.ones((1, 2), dtype=bool))
        np.testing.assert_allclose(y.data, [[0.5, 0.5]])

    def test_fully_masked_row_is_rejected(self):
        with self.assertRaises(ContractViolation):
            F.softmax_rows(Tensor([[1.0, 2.0]]), np.zeros((1, 2), dtype=bool))

    def test_mask_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            F.softmax_rows(Tensor(np.zeros((2, 3))), np.ones((2, 2), dtype=bool))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        with precision(np.float64):
            x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
            w = rng.normal(size=(3, 4))
            allow = np.tril(np.ones((3, 4), dtype=bool))
            self.assertElementwiseGradient(lambda: F.sum_all(F.mul(F.softmax_rows(x, allow), w)), x)


class TestCrossEntropy(BaseNumericTest):

    def test_matches_decimal_oracle(self):
        rng = np.random.default_rng(3)
        with precision(np.float64):
            logits = Tensor(rng.normal(size=(5, 7)) * 4.0)
            targets = [0, 6, 3, 3, 1]
            loss = F.cross_entropy(logits, targets)
        self.assertAlmostEqual(float(loss.data), decimal_cross_entropy(logits.data, targets), places=12)

    def test_uniform_logits_give_log_vocab(self):
        loss = F.cross_entropy(Tensor(np.zeros((3, 10))), [1, 2, 3])
        self.assertAlmostEqual(float(loss.data), np.log(10), places=5)

    def test_ignored_rows_do_not_contribute(self):
        with precision(np.float64):
            logits = Tensor(np.array([[2.0, 0.0], [0.0, 9.0]]), requires_grad=True)
            loss = F.cross_entropy(logits, [0, 0], ignore=[1])
            loss.backward()
        self.assertAlmostEqual(float(loss.data), float(np.log(1 + np.exp(-2.0))), places=12)
        np.testing.assert_array_equal(logits.grad[1], [0.0, 0.0])

    def test_invalid_targets(self):
        with self.assertRaises(ContractViolation):
            F.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
        with self.assertRaises(ContractViolation):
            F.cross_entropy(Tensor(np.zeros((2, 3))), [0, 1], ignore=[0, 1])

    def test_gradient(self):
        rng = np.random.default_rng(4)
        with precision(np.float64):
            logits = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
            self.assertElementwiseGradient(lambda: F.cross_entropy(logits, [5, 0, 2, 2], ignore=[2]), logits)


class TestMaskedMeanSquare(BaseNumericTest):

    def test_matches_double_loop(self):
        rng = np.random.default_rng(5)
        diff = rng.normal(size=(7, 3))
        m = np.array([1, 0, 1, 1, 0, 0, 1], dtype=bool)
        total, count = 0.0, 0
        for i in range(7):
            if m[i]:
                for j in range(3):
                    total += diff[i, j] ** 2
                    count += 1
        with precision(np.float64):
            loss = F.masked_mean_square(Tensor(diff), m)
        self.assertAlmostEqual(float(loss.data), total / count, places=12)

    def test_unselected_rows_have_zero_gradient(self):
        with precision(np.float64):
            diff = Tensor(np.array([[3.0], [999.0]]), requires_grad=True)
            loss = F.masked_mean_square(diff, np.array([True, False]))
            loss.backward()
        self.assertEqual(float(loss.data), 9.0)
        self.assertEqual(diff.grad[1, 0], 0.0)
        self.assertEqual(diff.grad[0, 0], 6.0)

    def test_empty_mask_is_rejected(self):
        with self.assertRaises(ContractViolation):
            F.masked_mean_square(Tensor(np.ones((2, 2))), np.zeros(2, dtype=bool))


class TestPrimitives(BaseNumericTest):

    def test_broadcast_is_limited_to_trailing_vectors(self):
        with self.assertRaises(DimensionError):
            F.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 1))))
        out = F.add(Tensor(np.zeros((3, 4))), Tensor(np.arange(4.0)))
        np.testing.assert_array_equal(out.data[2], np.arange(4.0))

    def test_matmul_shape_errors(self):
        with self.assertRaises(DimensionError):
            F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_take_rows_scatters_repeated_rows(self):
        with precision(np.float64):
            table = Tensor(np.zeros((4, 2)), requires_grad=True)
            F.sum_all(F.take_rows(table, [1, 1, 3])).backward()
        np.testing.assert_array_equal(table.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_concat_and_slice(self):
        a = Tensor(np.ones((2, 2)))
        b = Tensor(np.zeros((2, 3)))
        joined = F.concat([a, b], axis=1)
        self.assertEqual(joined.shape, (2, 5))
        np.testing.assert_array_equal(F.slice_cols(joined, 0, 2).data, a.data)
        with self.assertRaises(DimensionError):
            F.concat([a, b], axis=0)

    def test_layer_norm_normalizes_rows(self):
        with precision(np.float64):
            x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
            y = F.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        self.assertAlmostEqual(float(y.data.mean()), 0.0, places=12)
        self.assertAlmostEqual(float(y.data.var()), 1.0 / (1.0 + 1e-5 / 1.25), places=6)

    def test_composite_gradients(self):
        rng = np.random.default_rng(6)
        with precision(np.float64):
            x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
            g = Tensor(rng.normal(size=4) + 1.0, requires_grad=True)
            b = Tensor(rng.normal(size=4), requires_grad=True)

            def loss():
                h = F.layer_norm(x, g, b)
                h = F.silu(F.matmul(h, w))
                return F.mean_all(F.div(F.mul(h, h), 2.0))

            self.assertGradientsMatch(loss, {"x": x, "w": w, "g": g, "b": b})
            self.assertElementwiseGradient(loss, g)


if __name__ == '__main__':
    unittest.main()
