import unittest

import numpy as np

from autodiff import Tape, grad_check, parameter, tsum
from config.exceptions import NumericalError, ShapeError
from network import (
    BiLstmCleaner, GmvNetwork, LagTransform, VolatilityMlp, half_mass_lag,
    inverse_softplus, lstm_cell, mlp_param_count, param_count, spectrum_stability_report,
)
from portfolio.assembly import marginal_std


def numeric_gradient(fn, param, h=1e-6):
    """중앙 차분 그래디언트 (테스트 오라클)"""
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(param.shape)


def analytic_gradients(fn, params):
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return {name: tape.grad(p) for name, p in params.items()}


class LagTransformTest(unittest.TestCase):
    """지연별 변환"""

    def test_unit_parameters(self):
        lag = LagTransform(1, alpha=np.ones(1), beta_raw=np.array([inverse_softplus(1.0)]))
        out = lag(np.array([[0.01]])).item()
        self.assertAlmostEqual(out, np.tanh(2.52), places=10)
        self.assertAlmostEqual(out, 0.9871, places=4)

    def test_saturation_at_alpha_over_beta(self):
        lag = LagTransform(1, alpha=np.ones(1), beta_raw=np.array([inverse_softplus(2.0)]))
        self.assertAlmostEqual(lag(np.array([[0.5]])).item(), 0.5, places=12)

    def test_small_beta_linear_regime(self):
        lag = LagTransform(1, alpha=np.array([1.5]), beta_raw=np.array([-30.0]))
        out = lag(np.array([[0.003]])).item()
        self.assertAlmostEqual(out / (252 * 1.5 * 0.003), 1.0, places=8)

    def test_initial_parameters(self):
        lag = LagTransform(1200)
        self.assertEqual(sum(p.data.size for p in lag.params.values()), 2400)
        np.testing.assert_allclose(lag.beta, 0.5, rtol=1e-12)
        np.testing.assert_array_equal(lag(np.zeros((1200, 3))).data, 0.0)

    def test_initial_transform_lag_independent(self):
        lag = LagTransform(4)
        window = np.tile(np.array([[0.01, -0.02]]), (4, 1))
        out = lag(window).data
        for row in out[1:]:
            np.testing.assert_array_equal(row, out[0])

    def test_most_recent_row_uses_first_lag(self):
        lag = LagTransform(3, alpha=np.array([2.0, 1.0, 1.0]))
        out = lag(np.full((3, 1), 0.001)).data[:, 0]
        self.assertAlmostEqual(out[2] / out[0], 2.0, places=12)
        self.assertAlmostEqual(out[1], out[0], places=15)

    def test_antisymmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        lag = LagTransform(6, alpha=rng.uniform(0.5, 1.5, 6), beta_raw=rng.uniform(-1, 1, 6))
        r = 0.002 * rng.standard_normal((6, 4))
        np.testing.assert_array_equal(lag(-r).data, -lag(r).data)
        bound = (lag.alpha / lag.beta)[::-1].reshape(6, 1)
        self.assertTrue(np.all(np.abs(lag(r).data) < bound))

    def test_monotone_in_return(self):
        lag = LagTransform(1)
        grid = np.linspace(-0.1, 0.1, 41).reshape(-1, 1)
        values = np.array([lag(g.reshape(1, 1)).item() for g in grid])
        self.assertTrue(np.all(np.diff(values) > 0))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        lag = LagTransform(5, alpha=rng.uniform(0.5, 1.5, 5), beta_raw=rng.uniform(-0.5, 0.5, 5))
        r = np.abs(0.01 * rng.standard_normal((5, 3))) + 0.001
        w = rng.uniform(0.5, 1.5, (5, 3))
        report = grad_check(lambda: tsum(lag(r) * w), lag.params)
        self.assertLess(report.max_error, 1e-6)

    def test_window_length_mismatch(self):
        with self.assertRaises(ShapeError):
            LagTransform(5)(np.zeros((4, 2)))

    def test_half_mass_lag(self):
        self.assertEqual(half_mass_lag(np.ones(1200)), 600)
        self.assertEqual(half_mass_lag(np.ones(5)), 3)
        power = np.arange(1, 1201) ** -0.2
        self.assertAlmostEqual(half_mass_lag(power) / 1200, 0.42, delta=0.01)

    def test_diagnostics_flat_beta(self):
        report = LagTransform(10).diagnostics()
        np.testing.assert_allclose(report['beta'], 0.5)
        self.assertEqual(report['half_mass_lag'], 5)
        np.testing.assert_array_equal(report['lag'], np.arange(1, 11))


class LstmCellTest(unittest.TestCase):
    """LSTM 셀"""

    def test_zero_weights_zero_hidden(self):
        w = 4
        h, m = lstm_cell(np.array([0.7, 0.3]), np.ones(w), np.zeros(w),
                         np.zeros((4 * w, 2)), np.zeros((4 * w, w)), np.zeros(4 * w))
        np.testing.assert_array_equal(h.data, 0.0)

    def test_saturated_forget_gate_keeps_memory(self):
        w = 3
        bias = np.zeros(4 * w)
        bias[0:w] = -50.0
        bias[w:2 * w] = 50.0
        memory = np.array([0.3, -0.2, 0.9])
        _, m = lstm_cell(np.array([0.5, 0.1]), np.zeros(w), memory,
                         np.zeros((4 * w, 2)), np.zeros((4 * w, w)), bias)
        np.testing.assert_allclose(m.data, memory, atol=1e-15)

    def test_matches_straight_line_equations(self):
        rng = np.random.default_rng(2)
        w = 5
        x, h, m = rng.standard_normal(2), rng.standard_normal(w), rng.standard_normal(w)
        w_in, w_rec, bias = rng.standard_normal((4 * w, 2)), rng.standard_normal((4 * w, w)), rng.standard_normal(4 * w)
        h_next, m_next = lstm_cell(x, h, m, w_in, w_rec, bias)

        def gate(k):
            return w_in[k * w:(k + 1) * w] @ x + w_rec[k * w:(k + 1) * w] @ h + bias[k * w:(k + 1) * w]

        i = 1.0 / (1.0 + np.exp(-gate(0)))
        f = 1.0 / (1.0 + np.exp(-gate(1)))
        c = np.tanh(gate(2))
        o = 1.0 / (1.0 + np.exp(-gate(3)))
        expected_m = f * m + i * c
        np.testing.assert_allclose(m_next.data, expected_m, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(h_next.data, o * np.tanh(expected_m), rtol=1e-12, atol=1e-14)


class BiLstmCleanerTest(unittest.TestCase):
    """BiLSTM 정제기"""

    def test_param_count(self):
        self.assertEqual(param_count(64), 34433)
        self.assertEqual(param_count(1), 35)
        self.assertEqual(BiLstmCleaner(8).n_params, 721)
        self.assertEqual(param_count(8), 721)

    def test_sum_to_n_and_positive(self):
        cleaner = BiLstmCleaner(8, rng=np.random.default_rng(3))
        rng = np.random.default_rng(30)
        for _ in range(1000):
            n = int(rng.integers(2, 25))
            values = np.exp(rng.uniform(-4.0, 2.0, n))
            out = cleaner(values, float(rng.uniform(0.01, 0.99))).data
            self.assertLess(abs(out.sum() - n), 1e-8 * n)
            self.assertTrue(np.all(out > 0))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        cleaner = BiLstmCleaner(8, rng=rng)
        values = rng.uniform(0.1, 3.0, 12)
        perm = rng.permutation(12)
        base = cleaner(values, 0.5).data
        permuted = cleaner(values[perm], 0.5).data
        np.testing.assert_allclose(permuted, base[perm], atol=1e-12, rtol=0)

    def test_dimension_agnostic(self):
        cleaner = BiLstmCleaner(4)
        for n in (2, 5, 30):
            self.assertEqual(cleaner(np.linspace(0.1, 2.0, n), 0.2).shape, (n,))

    def test_invalid_input(self):
        cleaner = BiLstmCleaner(4)
        with self.assertRaises(ShapeError):
            cleaner(np.array([1.0]), 0.5)
        with self.assertRaises(NumericalError):
            cleaner(np.array([1.0, np.nan]), 0.5)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        cleaner = BiLstmCleaner(3, rng=rng)
        values = parameter(np.array([0.2, 1.4, 0.7, 2.2, 0.45]), name='values')
        weights = rng.uniform(0.5, 1.5, 5)
        params = dict(cleaner.params, values=values)

        def loss():
            return tsum(cleaner(values, 0.4) * weights)

        analytic = analytic_gradients(loss, params)
        for name, p in params.items():
            numeric = numeric_gradient(loss, p, h=1e-5)
            np.testing.assert_allclose(analytic[name], numeric, rtol=1e-5, atol=1e-8, err_msg=name)

    def test_constant_head_gives_zero_log_std(self):
        cleaner = BiLstmCleaner(4)
        cleaner.params['lstm.head.a'].data[:] = 0.0
        rng = np.random.default_rng(6)
        samples = [(rng.uniform(0.1, 3.0, 6), 0.3) for _ in range(4)]
        report = spectrum_stability_report([cleaner], samples)
        nn = report[report['method'] == 'nn']
        np.testing.assert_allclose(nn['log_std'].to_numpy(), 0.0, atol=1e-12)

    def test_identical_spectra_zero_log_std(self):
        values = np.array([0.2, 0.9, 1.9])
        report = spectrum_stability_report([], [(values, 0.3), (values, 0.3)])
        np.testing.assert_array_equal(report['log_std'].to_numpy(), 0.0)

    def test_raw_bootstrap_spectra_vary(self):
        rng = np.random.default_rng(7)
        samples = []
        for _ in range(20):
            x = rng.standard_normal((40, 10))
            samples.append((np.linalg.eigvalsh(np.corrcoef(x, rowvar=False)), 0.25))
        report = spectrum_stability_report([], samples, benchmarks={'flat': lambda v, q: np.ones_like(v)})
        raw = report[report['method'] == 'raw']
        self.assertTrue(np.all(raw['log_std'].to_numpy()[2:-2] > 0))
        flat = report[report['method'] == 'flat']
        np.testing.assert_array_equal(flat['log_std'].to_numpy(), 0.0)

    def test_rank_deficient_spectra_stay_finite(self):
        rng = np.random.default_rng(8)
        samples = []
        for _ in range(10):
            x = rng.standard_normal((6, 10))
            samples.append((np.linalg.eigvalsh(np.corrcoef(x, rowvar=False)), 10 / 6))
        with np.errstate(all='raise'):
            report = spectrum_stability_report([], samples)
        self.assertTrue(np.all(np.isfinite(report['log_std'].to_numpy())))
        self.assertTrue(np.all(np.isfinite(report['median'].to_numpy())))


class VolatilityMlpTest(unittest.TestCase):
    """변동성 MLP"""

    def test_param_count(self):
        self.assertEqual(mlp_param_count(), 2753)
        self.assertEqual(VolatilityMlp().n_params, 2753)

    def test_identical_inputs_give_ones(self):
        mlp = VolatilityMlp(rng=np.random.default_rng(1))
        np.testing.assert_allclose(mlp(np.full(5, 0.02)).data, 1.0, rtol=1e-14)

    def test_mean_one(self):
        mlp = VolatilityMlp(rng=np.random.default_rng(2))
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            out = mlp(np.exp(rng.uniform(-6.0, 1.0, n))).data
            self.assertLess(abs(out.mean() - 1.0), 1e-10)
            self.assertTrue(np.all(out > 0))

    def test_zero_weights_constant_output(self):
        arrays = {k: np.zeros_like(v) for k, v in VolatilityMlp.init_arrays(np.random.default_rng(0)).items()}
        mlp = VolatilityMlp(arrays=arrays)
        np.testing.assert_allclose(mlp.raw_output(np.array([0.1, 1.0, 5.0])).data, np.log(2.0))

    def test_same_seed_identical(self):
        a = VolatilityMlp(rng=np.random.default_rng(9))
        b = VolatilityMlp(rng=np.random.default_rng(9))
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_per_asset_independence(self):
        mlp = VolatilityMlp(rng=np.random.default_rng(4))
        sigma = np.array([0.5, 1.0, 1.5, 2.0])
        base = mlp.raw_output(sigma).data
        changed = sigma.copy()
        changed[2] = 0.7
        moved = mlp.raw_output(changed).data
        np.testing.assert_allclose(np.delete(moved, 2), np.delete(base, 2), rtol=1e-14)
        perm = np.array([3, 1, 0, 2])
        np.testing.assert_allclose(mlp.raw_output(sigma[perm]).data, base[perm], rtol=1e-14)

    def test_non_positive_input(self):
        with self.assertRaises(NumericalError):
            VolatilityMlp()(np.array([0.1, 0.0]))

    def test_gradient(self):
        mlp = VolatilityMlp(rng=np.random.default_rng(5))
        sigma = np.array([0.3, 0.8, 1.6])
        weights = np.array([0.7, 1.2, 0.9])

        def loss():
            return tsum(mlp(sigma) * weights + mlp.raw_output(sigma))

        analytic = analytic_gradients(loss, mlp.params)
        for name in ('mlp.w0', 'mlp.b2', 'mlp.w3', 'mlp.b3'):
            numeric = numeric_gradient(loss, mlp.params[name])
            np.testing.assert_allclose(analytic[name], numeric, rtol=1e-6, atol=1e-9, err_msg=name)


class MarginalStdTest(unittest.TestCase):

    def test_alternating_column(self):
        column = np.array([0.3, -0.3, 0.3, -0.3]).reshape(-1, 1)
        self.assertAlmostEqual(marginal_std(column).item(), 0.3, places=14)

    def test_constant_column_rejected(self):
        with self.assertRaises(NumericalError):
            marginal_std(np.column_stack([np.full(6, 0.01), np.arange(6.0)]))

    def test_matches_two_pass(self):
        x = np.random.default_rng(0).standard_normal((60, 5))
        np.testing.assert_allclose(marginal_std(x).data, x.std(axis=0, ddof=0), rtol=1e-12)


class GmvNetworkTest(unittest.TestCase):
    """조립된 네트워크"""

    def setUp(self):
        rng = np.random.default_rng(11)
        self.window = 0.01 * rng.standard_normal((30, 6))
        self.oos = 0.01 * rng.standard_normal((5, 6))

    def test_param_count(self):
        self.assertEqual(GmvNetwork.expected_param_count(1200, 64), 39586)
        net = GmvNetwork(40, width=8, seed=1)
        self.assertEqual(net.n_params, GmvNetwork.expected_param_count(40, 8))

    def test_weights_sum_to_one(self):
        net = GmvNetwork(30, width=8, seed=2)
        out = net.forward(self.window)
        self.assertAlmostEqual(out.weights.data.sum(), 1.0, places=10)
        corr = out.estimate().implied_correlation()
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-8)

    def test_asset_permutation_equivariance(self):
        net = GmvNetwork(30, width=8, seed=3)
        rng = np.random.default_rng(31)
        for _ in range(100):
            window = rng.standard_normal((30, 6)) * rng.uniform(0.005, 0.03, 6)
            perm = rng.permutation(6)
            base = net.forward(window).weights.data
            permuted = net.forward(window[:, perm]).weights.data
            np.testing.assert_allclose(permuted, base[perm], atol=1e-10, rtol=0)

    def test_same_seed_same_params(self):
        a, b = GmvNetwork(30, width=8, seed=4), GmvNetwork(30, width=8, seed=4)
        for name in a.param_names(8):
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_full_pipeline_gradient(self):
        rng = np.random.default_rng(12)
        window = 0.01 * rng.standard_normal((60, 20))
        oos = 0.01 * rng.standard_normal((5, 20))
        net = GmvNetwork(60, width=64, seed=5)
        report = grad_check(lambda: net.loss(window, oos), net.params, max_entries=4,
                            rng=np.random.default_rng(0))
        self.assertLess(report.max_error, 1e-4)

    def test_round_trip_arrays(self):
        net = GmvNetwork(30, width=8, seed=6)
        clone = GmvNetwork(30, width=8, arrays=net.copy_arrays())
        np.testing.assert_array_equal(clone.forward(self.window).weights.data,
                                      net.forward(self.window).weights.data)
