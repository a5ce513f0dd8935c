import unittest

import numpy as np

from autodiff import (
    AdamState, Tape, Tensor, adam_step, as_tensor, concat, eigh_array, eigh_sym,
    grad_check, leaky_relu, log, parameter, sigmoid, softplus, sqrt, square, stack,
    tanh, tsum,
)
from autodiff.linalg import gap_factors
from config.exceptions import NumericalError, ShapeError


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return tsum(out * weights)


class PrimitiveTest(unittest.TestCase):
    """기본 연산의 값과 그래디언트"""

    def test_softplus_at_zero(self):
        self.assertAlmostEqual(softplus(as_tensor(0.0)).item(), np.log(2.0), places=14)

    def test_softplus_overflow_safe(self):
        out = softplus(as_tensor(np.array([-800.0, 800.0]))).data
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertAlmostEqual(out[1], 800.0)
        self.assertGreaterEqual(out[0], 0.0)

    def test_tanh_gradient_at_zero(self):
        x = parameter(0.0)
        with Tape() as tape:
            y = tanh(x)
        tape.backward(y)
        self.assertAlmostEqual(float(tape.grad(x)), 1.0)

    def test_leaky_relu_default_slope(self):
        x = parameter(np.array([-2.0, 3.0]))
        with Tape() as tape:
            y = tsum(leaky_relu(x))
        tape.backward(y)
        np.testing.assert_allclose(tape.grad(x), [0.01, 1.0])
        np.testing.assert_allclose(leaky_relu(as_tensor([-2.0, 3.0])).data, [-0.02, 3.0])

    def test_matmul_gradient(self):
        rng = np.random.default_rng(0)
        a = parameter(rng.uniform(0.5, 1.5, (3, 4)), name='a')
        b = parameter(rng.uniform(0.5, 1.5, (4, 2)), name='b')
        w = rng.uniform(0.5, 1.5, (3, 2))
        report = grad_check(lambda: weighted_sum(a @ b, w), {'a': a, 'b': b})
        self.assertLess(report.max_error, 1e-7)

    def test_randomized_primitives(self):
        unary = {
            'tanh': tanh,
            'sigmoid': sigmoid,
            'softplus': softplus,
            'leaky_relu': lambda t: leaky_relu(t * 1.0 - 1.0),
            'sqrt': sqrt,
            'log': log,
            'square': square,
            'transpose': lambda t: t.T,
            'slice': lambda t: t[1:, ::2],
            'fancy': lambda t: t[np.array([0, 0, 2])],
            'mean_axis': lambda t: t.mean(axis=0),
            'sum_keepdims': lambda t: t.sum(axis=1, keepdims=True),
            'reshape': lambda t: t.reshape(4, 3),
        }
        binary = {
            'add': lambda a, b: a + b,
            'sub': lambda a, b: a - b,
            'mul': lambda a, b: a * b,
            'div': lambda a, b: a / b,
            'broadcast_row': lambda a, b: a * b[0:1, :],
            'concat': lambda a, b: concat([a, b], axis=1),
            'stack': lambda a, b: stack([a, b], axis=0),
        }
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = parameter(rng.uniform(0.5, 1.5, (3, 4)), name='x')
            y = parameter(rng.uniform(0.5, 1.5, (3, 4)), name='y')
            for name, fn in unary.items():
                out_shape = fn(as_tensor(x.data)).shape
                w = rng.uniform(0.5, 1.5, out_shape)
                report = grad_check(lambda: weighted_sum(fn(x), w), {'x': x})
                self.assertLess(report.max_error, 1e-6, msg=f"{name} seed={seed}")
            for name, fn in binary.items():
                out_shape = fn(as_tensor(x.data), as_tensor(y.data)).shape
                w = rng.uniform(0.5, 1.5, out_shape)
                report = grad_check(lambda: weighted_sum(fn(x, y), w), {'x': x, 'y': y})
                self.assertLess(report.max_error, 1e-6, msg=f"{name} seed={seed}")

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            as_tensor(np.ones((2, 3))) @ as_tensor(np.ones((2, 3)))
        with self.assertRaises(ShapeError):
            as_tensor(np.ones((2, 3))) + as_tensor(np.ones((3, 2)))

    def test_gradient_accumulates_over_reuse(self):
        x = parameter(2.0)
        with Tape() as tape:
            y = x * x + x
        tape.backward(y)
        self.assertAlmostEqual(float(tape.grad(x)), 5.0)

    def test_no_tape_records_nothing(self):
        x = parameter(np.ones(3))
        y = tanh(x)
        self.assertFalse(y.requires_grad)


class EighSymTest(unittest.TestCase):
    """대칭 고유값 분해"""

    def test_identity(self):
        values, vectors = eigh_array(np.eye(4))
        np.testing.assert_allclose(values, np.ones(4))
        np.testing.assert_allclose(vectors, np.eye(4))

    def test_two_by_two(self):
        values, _ = eigh_array(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(values, [1.0, 3.0])

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 8))
        a = x @ x.T
        values, vectors = eigh_array(a)
        self.assertTrue(np.all(np.diff(values) >= 0))
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(8), atol=1e-10)
        error = np.linalg.norm(vectors @ np.diag(values) @ vectors.T - a) / np.linalg.norm(a)
        self.assertLess(error, 1e-8)
        pivots = np.argmax(np.abs(vectors), axis=0)
        self.assertTrue(np.all(vectors[pivots, np.arange(8)] > 0))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 6))
        a = x @ x.T
        perm = rng.permutation(6)
        values, vectors = eigh_array(a)
        p_values, p_vectors = eigh_array(a[np.ix_(perm, perm)])
        np.testing.assert_allclose(p_values, values, rtol=1e-10)
        np.testing.assert_allclose(p_vectors, vectors[perm], atol=1e-9)

    def test_non_symmetric_rejected(self):
        with self.assertRaises(NumericalError):
            eigh_array(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_gradient_well_separated(self):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        base = q @ np.diag(np.arange(1.0, 7.0)) @ q.T
        x = parameter(base, name='x')
        w_values = rng.uniform(0.5, 1.5, 6)
        w_vectors = rng.standard_normal((6, 6))

        def loss():
            values, vectors = eigh_sym(0.5 * (x + x.T))
            return tsum(values * w_values) + tsum(vectors * w_vectors)

        report = grad_check(loss, {'x': x}, h=1e-5)
        self.assertLess(report.max_error, 1e-5)

    def test_eigenvalue_gradient_matches_analytic_rule(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = rng.standard_normal((5, 5))
            a = parameter(x + x.T)
            for k in range(5):
                with Tape() as tape:
                    values, vectors = eigh_sym(a)
                    picked = values[k]
                tape.backward(picked)
                v = vectors.data[:, k]
                np.testing.assert_allclose(tape.grad(a), np.outer(v, v), atol=1e-8)

    def test_gap_factor_clamped(self):
        factors = gap_factors(np.array([1.0, 1.0, 2.0]))
        self.assertTrue(np.all(np.isfinite(factors)))
        self.assertLessEqual(np.max(np.abs(factors)), 1e12)
        self.assertEqual(factors[0, 0], 0.0)
        self.assertAlmostEqual(factors[0, 2], 1.0)


class GradCheckTest(unittest.TestCase):

    def test_square_at_three(self):
        x = parameter(3.0)
        report = grad_check(lambda: square(x), {'x': x})
        self.assertLess(report.max_error, 1e-9)

    def test_constant_function(self):
        x = parameter(np.ones(3))
        report = grad_check(lambda: as_tensor(5.0), {'x': x})
        self.assertEqual(report.max_error, 0.0)

    def test_sampled_entries(self):
        x = parameter(np.linspace(0.5, 1.5, 50))
        report = grad_check(lambda: tsum(square(x)), {'x': x}, max_entries=7,
                            rng=np.random.default_rng(0))
        self.assertEqual(report.checked['x'], 7)


class AdamTest(unittest.TestCase):

    def test_zero_gradient_leaves_params(self):
        params = {'w': np.array([1.0, -2.0])}
        state = AdamState()
        self.assertTrue(adam_step(params, {'w': np.zeros(2)}, state, lr=0.1))
        np.testing.assert_array_equal(params['w'], [1.0, -2.0])

    def test_first_step_unit_direction(self):
        params = {'w': np.array([0.0])}
        adam_step(params, {'w': np.array([1.0])}, AdamState(), lr=1e-4)
        self.assertAlmostEqual(params['w'][0], -1e-4, places=10)

    def test_clip_by_norm(self):
        params = {'a': np.zeros(2), 'b': np.zeros(1)}
        grads = {'a': np.array([6.0, 0.0]), 'b': np.array([8.0])}
        state = AdamState()
        adam_step(params, grads, state, lr=1e-3, clip_norm=1.0)
        effective = np.sqrt(np.sum(state.m['a'] ** 2) + np.sum(state.m['b'] ** 2)) / 0.1
        self.assertAlmostEqual(effective, 1.0)

    def test_non_finite_gradient_rejected(self):
        params = {'w': np.array([1.0])}
        state = AdamState()
        self.assertFalse(adam_step(params, {'w': np.array([np.nan])}, state, lr=0.1))
        self.assertEqual(state.step, 0)
        np.testing.assert_array_equal(params['w'], [1.0])
