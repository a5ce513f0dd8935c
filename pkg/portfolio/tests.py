import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from config.exceptions import NumericalError
from portfolio import (
    PortfolioWeights, assemble_precision, benchmark_covariance, eigen_weight_decomposition,
    gmv_loss, gmv_weights, gmv_weights_longonly, predicted_inflation, project_eigvecs,
    sample_correlation, variance_inflation_mc,
)


def random_spd(n, rng):
    x = rng.standard_normal((n, n))
    return x @ x.T + n * np.eye(n)


class SampleCorrelationTest(unittest.TestCase):
    """표본 상관행렬"""

    def test_perfectly_correlated_columns(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(50)
        b = rng.standard_normal(50)
        corr, spectrum = sample_correlation(np.column_stack([a, 2.0 * a + 1.0, b]))
        self.assertAlmostEqual(corr.data[0, 1], 1.0, places=12)
        self.assertAlmostEqual(spectrum.eigenvalues.data[0], 0.0, places=10)

    def test_unit_diagonal(self):
        x = np.random.default_rng(1).standard_normal((30, 6))
        corr, _ = sample_correlation(x)
        np.testing.assert_array_equal(np.diag(corr.data), 1.0)

    def test_independent_columns_near_identity(self):
        x = np.random.default_rng(2).standard_normal((100000, 4))
        corr, _ = sample_correlation(x)
        off = corr.data[~np.eye(4, dtype=bool)]
        self.assertLess(np.max(np.abs(off)), 0.02)


class AssemblyTest(unittest.TestCase):
    """역공분산 조립"""

    def test_project_identity_eigenvalues(self):
        q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((5, 5)))
        np.testing.assert_allclose(project_eigvecs(q, np.ones(5)).data, q, atol=1e-12)

    def test_project_unit_diagonal_and_formula(self):
        rng = np.random.default_rng(4)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        lam = rng.uniform(0.2, 3.0, 5)
        v = project_eigvecs(q, lam).data
        np.testing.assert_allclose(np.diag(v @ np.diag(lam) @ v.T), 1.0, atol=1e-10)
        for i in range(5):
            scale = np.sqrt(sum(q[i, k] ** 2 * lam[k] for k in range(5)))
            np.testing.assert_allclose(v[i], q[i] / scale, rtol=1e-12)

    def test_assemble_identity(self):
        np.testing.assert_allclose(assemble_precision(np.ones(3), np.eye(3), np.ones(3)).data, np.eye(3))

    def test_assemble_diagonal_case(self):
        sigma = np.array([0.5, 2.0, 1.5])
        inv_lam = np.array([1.2, 0.7, 1.1])
        precision = assemble_precision(1.0 / sigma, np.eye(3), inv_lam).data
        np.testing.assert_allclose(np.diag(precision), inv_lam / sigma ** 2, rtol=1e-14)

    def test_assemble_random_blocks(self):
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        inv_vol, inv_lam = rng.uniform(0.5, 2.0, 4), rng.uniform(0.5, 2.0, 4)
        precision = assemble_precision(inv_vol, q, inv_lam).data
        expected = np.diag(inv_vol) @ q @ np.diag(inv_lam) @ q.T @ np.diag(inv_vol)
        np.testing.assert_allclose(precision, expected, rtol=1e-12)
        np.testing.assert_allclose(precision @ np.linalg.inv(precision), np.eye(4), atol=1e-8)
        np.testing.assert_array_equal(precision, precision.T)

    def test_weights_invariant_to_rescaling(self):
        rng = np.random.default_rng(6)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        inv_vol, inv_lam = rng.uniform(0.5, 2.0, 5), rng.uniform(0.5, 2.0, 5)
        base = gmv_weights(assemble_precision(inv_vol, q, inv_lam)).data
        scaled = gmv_weights(assemble_precision(3.0 * inv_vol, q, 7.0 * inv_lam)).data
        np.testing.assert_allclose(scaled, base, atol=1e-10)


class GmvWeightsTest(unittest.TestCase):
    """GMV 가중치"""

    def test_identity(self):
        np.testing.assert_allclose(gmv_weights(np.eye(4)).data, 0.25)

    def test_two_variances(self):
        np.testing.assert_allclose(gmv_weights(np.diag([1.0, 0.25])).data, [0.8, 0.2])

    def test_scale_invariance(self):
        p = np.linalg.inv(random_spd(5, np.random.default_rng(7)))
        np.testing.assert_allclose(gmv_weights(3.5 * p).data, gmv_weights(p).data, atol=1e-14)

    def test_broken_precision(self):
        with self.assertRaises(NumericalError):
            gmv_weights(-np.eye(3))

    def test_portfolio_weights_csv(self):
        weights = PortfolioWeights(np.array([0.6, 0.4]), assets=['X', 'Y'])
        self.assertAlmostEqual(weights.n_eff, 1.0 / 0.52)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'w.csv'
            weights.to_csv(path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['asset_id', 'weight'])
        np.testing.assert_allclose(frame['weight'], [0.6, 0.4])


class LongOnlyQpTest(unittest.TestCase):
    """롱온리 QP"""

    def test_inactive_constraint_matches_closed_form(self):
        cov = np.array([[1.0, 0.2, 0.1], [0.2, 1.5, 0.3], [0.1, 0.3, 2.0]])
        result = gmv_weights_longonly(cov)
        np.testing.assert_allclose(result.weights, gmv_weights(np.linalg.inv(cov)).data, atol=1e-8)

    def test_highly_correlated_pair(self):
        result = gmv_weights_longonly(np.array([[1.0, 0.99], [0.99, 1.0]]))
        np.testing.assert_allclose(result.weights, [0.5, 0.5], atol=1e-10)

    def test_boundary_solution(self):
        cov = np.array([[1.0, 1.5], [1.5, 3.0]])
        unconstrained = gmv_weights(np.linalg.inv(cov)).data
        np.testing.assert_allclose(unconstrained, [1.5, -0.5], atol=1e-12)
        result = gmv_weights_longonly(cov)
        np.testing.assert_allclose(result.weights, [1.0, 0.0], atol=1e-12)
        self.assertTrue(result.active[1])

    def test_kkt_and_variance_ordering(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = 12
            loadings = rng.standard_normal((n, 2))
            cov = loadings @ loadings.T + np.diag(rng.uniform(0.1, 1.0, n))
            result = gmv_weights_longonly(cov)
            self.assertAlmostEqual(result.weights.sum(), 1.0, places=10)
            self.assertGreaterEqual(result.weights.min(), -1e-12)
            for key, value in result.kkt.items():
                self.assertLess(value, 1e-8, msg=key)
            w_free = gmv_weights(np.linalg.inv(cov)).data
            self.assertGreaterEqual(result.weights @ cov @ result.weights, w_free @ cov @ w_free - 1e-14)

    def test_matches_simplex_grid_minimum(self):
        steps = np.arange(1001) / 1000.0
        pair_grid = np.column_stack([steps, 1.0 - steps])
        i, j = np.meshgrid(steps, steps, indexing='ij')
        inside = i + j <= 1.0 + 1e-12
        triple_grid = np.column_stack([i[inside], j[inside], np.clip(1.0 - i[inside] - j[inside], 0.0, None)])

        rng = np.random.default_rng(12)
        for n, grid in ((2, pair_grid), (3, triple_grid)):
            for _ in range(10):
                x = rng.standard_normal((n, n))
                vols = np.exp(rng.uniform(-1.0, 1.0, n))
                cov = (x @ x.T + 0.05 * np.eye(n)) * np.outer(vols, vols)
                result = gmv_weights_longonly(cov)
                qp_variance = result.weights @ cov @ result.weights
                grid_min = np.einsum('ij,jk,ik->i', grid, cov, grid).min()
                top = np.linalg.eigvalsh(cov)[-1]
                self.assertLessEqual(qp_variance, grid_min + 1e-12 * top)
                self.assertLessEqual(grid_min - qp_variance, 1e-5 * top)

    def test_singular_covariance_jittered(self):
        v = np.array([1.0, 2.0, 3.0])
        result = gmv_weights_longonly(np.outer(v, v))
        self.assertGreater(result.jitter, 0.0)
        self.assertAlmostEqual(result.weights.sum(), 1.0, places=10)


class EigenDecompositionTest(unittest.TestCase):
    """가중치 고유모드 분해"""

    def test_identity(self):
        frame = eigen_weight_decomposition(np.eye(4))
        np.testing.assert_allclose(frame.attrs['weights'], 0.25, atol=1e-14)

    def test_mode_orthogonal_to_ones(self):
        frame = eigen_weight_decomposition(np.array([[2.0, 1.0], [1.0, 2.0]]))
        self.assertAlmostEqual(frame.loc[0, 'c'], 0.0, places=12)
        self.assertAlmostEqual(frame.loc[0, 'c_over_lambda'], 0.0, places=12)
        self.assertTrue((frame['c'] >= 0).all())

    def test_reconstruction_matches_gmv(self):
        cov = random_spd(6, np.random.default_rng(9))
        frame = eigen_weight_decomposition(cov)
        np.testing.assert_allclose(frame.attrs['weights'], gmv_weights(np.linalg.inv(cov)).data, atol=1e-10)

    def test_correlation_basis(self):
        rng = np.random.default_rng(10)
        cov = random_spd(5, rng)
        std = np.sqrt(np.diag(cov))
        corr = cov / np.outer(std, std)
        frame = eigen_weight_decomposition(corr, std=std)
        np.testing.assert_allclose(frame.attrs['weights'], gmv_weights(np.linalg.inv(cov)).data, atol=1e-10)


class LossTest(unittest.TestCase):
    """학습 손실"""

    def test_zero_returns(self):
        self.assertEqual(gmv_loss(np.full(3, 1 / 3), np.zeros((5, 3))).item(), 0.0)

    def test_single_day(self):
        n = 4
        w = np.zeros(n)
        w[0] = 1.0
        r = np.full((1, n), 0.01)
        self.assertAlmostEqual(gmv_loss(w, r).item(), n * 1e-4, places=15)

    def test_dual_form(self):
        rng = np.random.default_rng(11)
        w = rng.standard_normal(6)
        r = 0.01 * rng.standard_normal((5, 6))
        second_moment = r.T @ r / 5
        np.testing.assert_allclose(gmv_loss(w, r).item(), 6 * w @ second_moment @ w, rtol=1e-12)


class BenchmarkCovarianceTest(unittest.TestCase):

    def test_identity_correlation_gives_variances(self):
        x = np.random.default_rng(12).standard_normal((200, 3)) * np.array([1.0, 2.0, 3.0])
        cov = benchmark_covariance(x, np.eye(3))
        np.testing.assert_allclose(np.diag(cov), x.var(axis=0), rtol=1e-10)
        self.assertEqual(cov[0, 1], 0.0)

    def test_renormalizes_unit_diagonal(self):
        x = np.random.default_rng(13).standard_normal((50, 2))
        cov = benchmark_covariance(x, np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1]), 0.5)


class VarianceInflationTest(unittest.TestCase):
    """표본 GMV 분산 팽창"""

    def test_predicted_half(self):
        self.assertAlmostEqual(predicted_inflation(50, 100), 2.0)

    def test_vanishing_inflation(self):
        result = variance_inflation_mc(10, 10000, trials=50, seed=1)
        self.assertAlmostEqual(result['predicted'], 1.001, places=3)
        self.assertLess(abs(result['mc_mean'] - 1.0), 0.01)

    @pytest.mark.slow
    def test_quarter_aspect_ratio(self):
        result = variance_inflation_mc(20, 80, trials=2000, seed=2)
        self.assertLess(abs(result['mc_mean'] / (4.0 / 3.0) - 1.0), 0.05)
