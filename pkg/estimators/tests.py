import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.covariance import empirical_covariance

from config.exceptions import ConfigError, DataValidationError, LeakageError, NumericalError
from estimators import (
    AoTable, CleanConfig, CleanerTag, bistochastic_overlap, calibrate_ao, clean_ao, clean_correlation,
    clean_ls, clean_mle, clean_pm, clean_qis, clip_eigenvalues, correlation_matrix, erb_weights, estimate_covariance,
    marchenko_pastur_edge, mcw_weights, oracle_eigenvalues, spectrum_map, window_oracle,
)
from panel.models import ReturnPanel
from portfolio import gmv_weights


def random_orthogonal(n, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


def one_factor_returns(n, t, rho, rng):
    """상관 ρ의 단일 팩터 수익률과 모집단 상관행렬"""
    common = rng.standard_normal((t, 1))
    returns = 0.01 * (np.sqrt(rho) * common + np.sqrt(1 - rho) * rng.standard_normal((t, n)))
    population = np.full((n, n), rho)
    np.fill_diagonal(population, 1.0)
    return returns, population


def make_panel(returns, start='2020-01-01'):
    t, n = returns.shape
    return ReturnPanel(
        dates=pd.bdate_range(start, periods=t),
        assets=[f"A{i:04d}" for i in range(n)],
        returns=returns,
    )


class MleTest(unittest.TestCase):

    def test_identity_map(self):
        corr = correlation_matrix(np.random.default_rng(0).standard_normal((30, 4)))
        np.testing.assert_array_equal(clean_mle(corr), corr)

    def test_downstream_three_asset_weights(self):
        cov = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
        w = gmv_weights(np.linalg.inv(clean_mle(cov))).data
        np.testing.assert_allclose(w, [0.2, 0.2, 0.6], atol=1e-14)

    def test_downstream_identity(self):
        np.testing.assert_allclose(gmv_weights(np.linalg.inv(clean_mle(np.eye(3)))).data, 1 / 3)


class LedoitWolfTest(unittest.TestCase):
    """선형 축소"""

    def setUp(self):
        self.x = np.random.default_rng(1).standard_normal((40, 5))

    def test_full_shrinkage_is_scaled_identity(self):
        shrunk, rho = clean_ls(self.x, shrinkage=1.0)
        sample = empirical_covariance(self.x)
        self.assertEqual(rho, 1.0)
        np.testing.assert_allclose(shrunk, np.trace(sample) / 5 * np.eye(5), atol=1e-15)

    def test_no_shrinkage_keeps_sample(self):
        shrunk, _ = clean_ls(self.x, shrinkage=0.0)
        np.testing.assert_allclose(shrunk, empirical_covariance(self.x))

    def test_estimated_intensity_in_unit_interval(self):
        _, rho = clean_ls(self.x)
        self.assertGreaterEqual(rho, 0.0)
        self.assertLessEqual(rho, 1.0)

    def test_beats_sample_on_identity_population(self):
        wins = 0
        for seed in range(200):
            x = np.random.default_rng(seed).standard_normal((100, 50))
            shrunk, _ = clean_ls(x)
            sample = empirical_covariance(x)
            wins += np.linalg.norm(shrunk - np.eye(50)) < np.linalg.norm(sample - np.eye(50))
        self.assertGreaterEqual(wins, 190)


class PowerMapTest(unittest.TestCase):

    def test_gamma_one_is_identity(self):
        corr = correlation_matrix(np.random.default_rng(2).standard_normal((50, 6)))
        np.testing.assert_allclose(clean_pm(corr, 1.0), corr, atol=1e-15)

    def test_square_of_half(self):
        corr = np.array([[1.0, 0.5], [0.5, 1.0]])
        self.assertAlmostEqual(clean_pm(corr, 2.0)[0, 1], 0.25)

    def test_sign_preserved(self):
        corr = np.array([[1.0, -0.6], [-0.6, 1.0]])
        self.assertAlmostEqual(clean_pm(corr, 2.0)[0, 1], -0.36)

    def test_noise_correlation_squared(self):
        corr = correlation_matrix(np.random.default_rng(3).standard_normal((1000, 50)))
        off = ~np.eye(50, dtype=bool)
        mapped = clean_pm(corr, 2.0)
        self.assertAlmostEqual(np.mean(np.abs(mapped[off])), np.mean(corr[off] ** 2), places=12)
        self.assertLess(np.mean(np.abs(mapped[off])), 0.1 * np.mean(np.abs(corr[off])))

    def test_output_is_psd_correlation(self):
        corr = correlation_matrix(np.random.default_rng(4).standard_normal((12, 10)))
        mapped = clean_pm(corr, 1.5)
        np.testing.assert_allclose(np.diag(mapped), 1.0)
        self.assertGreater(np.linalg.eigvalsh(mapped)[0], -1e-12)

    def test_gamma_below_one(self):
        with self.assertRaises(ConfigError):
            clean_pm(np.eye(2), 0.5)


class QisTest(unittest.TestCase):
    """이차-역 축소"""

    def test_shrinks_toward_identity_population(self):
        x = np.random.default_rng(5).standard_normal((400, 100))
        sample = np.linalg.eigvalsh(empirical_covariance(x))
        shrunk = clean_qis(sample, 100 / 400)
        self.assertLess(np.mean(np.abs(shrunk - 1)), np.mean(np.abs(sample - 1)))

    def test_consistency_for_long_samples(self):
        rng = np.random.default_rng(6)
        scales = np.sqrt(np.logspace(0, 1, 10))
        x = rng.standard_normal((5000, 10)) * scales
        sample = np.linalg.eigvalsh(empirical_covariance(x))
        shrunk = clean_qis(sample, 10 / 5000)
        self.assertLess(np.max(np.abs(shrunk / sample - 1)), 0.02)

    def test_trace_order_positivity(self):
        rng = np.random.default_rng(7)
        values = rng.uniform(0.1, 5.0, 30)
        shrunk = clean_qis(values, 0.4)
        self.assertTrue(np.all(shrunk > 0))
        self.assertAlmostEqual(shrunk.sum() / values.sum(), 1.0, places=6)
        order = np.argsort(values)
        self.assertTrue(np.all(np.diff(shrunk[order]) >= 0))

    def test_unsupported_aspect_ratio(self):
        with self.assertRaises(ConfigError):
            clean_qis(np.ones(10), 1.0)


class ClipTest(unittest.TestCase):

    def test_noise_band_flattened(self):
        values = np.array([0.2, 0.5, 1.0, 3.0])
        clipped = clip_eigenvalues(values, 0.25)
        self.assertAlmostEqual(marchenko_pastur_edge(0.25), 2.25)
        np.testing.assert_allclose(clipped, [1.7 / 3, 1.7 / 3, 1.7 / 3, 3.0])
        self.assertAlmostEqual(clipped.sum(), values.sum())


class OracleTest(unittest.TestCase):
    """Frobenius 오라클"""

    def test_true_eigenvectors_recover_eigenvalues(self):
        rng = np.random.default_rng(8)
        v = random_orthogonal(5, rng)
        lam = np.array([0.1, 0.4, 0.8, 1.2, 2.5])
        reference = (v * lam) @ v.T
        reference = 0.5 * (reference + reference.T)
        _, vectors = np.linalg.eigh(reference)
        np.testing.assert_allclose(oracle_eigenvalues(vectors, reference), lam, atol=1e-12)

    def test_identity_reference(self):
        v = random_orthogonal(6, np.random.default_rng(9))
        np.testing.assert_allclose(oracle_eigenvalues(v, np.eye(6)), 1.0, atol=1e-12)

    def test_overlap_matches_quadratic_form(self):
        rng = np.random.default_rng(10)
        v_hat = random_orthogonal(6, rng)
        reference = correlation_matrix(rng.standard_normal((20, 6)))
        direct = np.array([v_hat[:, k] @ reference @ v_hat[:, k] for k in range(6)])
        np.testing.assert_allclose(oracle_eigenvalues(v_hat, reference), direct, atol=1e-12)

    def test_frobenius_optimality(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            v_hat = random_orthogonal(10, rng)
            reference = correlation_matrix(rng.standard_normal((40, 10)))
            _, reference_vectors = np.linalg.eigh(reference)
            psi = bistochastic_overlap(v_hat, reference_vectors)
            np.testing.assert_allclose(psi.sum(axis=0), 1.0, atol=1e-10)
            np.testing.assert_allclose(psi.sum(axis=1), 1.0, atol=1e-10)

            oracle = oracle_eigenvalues(v_hat, reference)
            direct = np.einsum('ik,ij,jk->k', v_hat, reference, v_hat)
            np.testing.assert_allclose(oracle, direct, atol=1e-12)

            best = np.linalg.norm((v_hat * oracle) @ v_hat.T - reference)
            for _ in range(20):
                perturbed = oracle + 0.05 * rng.standard_normal(10)
                self.assertGreater(np.linalg.norm((v_hat * perturbed) @ v_hat.T - reference), best)

    def test_non_orthonormal_vectors(self):
        with self.assertRaises(NumericalError):
            oracle_eigenvalues(2.0 * np.eye(3), np.eye(3))


class AverageOracleTest(unittest.TestCase):
    """평균 오라클 보정"""

    def test_single_window_equals_its_oracle(self):
        returns = 0.01 * np.random.default_rng(12).standard_normal((80, 5))
        panel = make_panel(returns)
        table = calibrate_ao(panel, n=5, dt_in=40, dt_out=40, samples=1)
        inside = np.corrcoef(returns[:40], rowvar=False)
        outside = np.corrcoef(returns[40:], rowvar=False)
        _, vectors = np.linalg.eigh(inside)
        expected = np.array([vectors[:, k] @ outside @ vectors[:, k] for k in range(5)])
        np.testing.assert_allclose(table.eigenvalues, expected, atol=1e-10)
        np.testing.assert_allclose(window_oracle(panel, 0, np.arange(5), 40, 40), expected, atol=1e-10)

    def test_input_agnostic_lookup(self):
        table = AoTable(n=3, dt_in=50, dt_out=5, span_start='2000-01-03', span_end='2001-01-02',
                        eigenvalues=np.array([0.5, 0.9, 1.6]), samples=10)
        a = clean_ao(table, np.array([0.1, 0.2, 2.7]), 50)
        b = clean_ao(table, np.array([0.8, 0.9, 1.3]), 50)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(clean_ao(table, np.array([2.0, 0.1, 0.5]), 50), [1.6, 0.5, 0.9])

    def test_missing_table(self):
        table = AoTable(n=3, dt_in=50, dt_out=5, span_start='a', span_end='b',
                        eigenvalues=np.ones(3), samples=1)
        with self.assertRaises(ConfigError):
            clean_ao(table, np.ones(3), 60)
        with self.assertRaises(ConfigError):
            clean_ao({table.key: table}, np.ones(4), 50)

    def test_oracle_lifts_small_eigenvalues(self):
        rng = np.random.default_rng(13)
        returns, _ = one_factor_returns(8, 2000, 0.5, rng)
        panel = make_panel(returns)
        table = calibrate_ao(panel, n=8, dt_in=40, dt_out=40, samples=200, seed=3)
        self.assertAlmostEqual(table.eigenvalues.mean(), 1.0, places=10)
        sample_min = np.linalg.eigvalsh(np.corrcoef(returns[:40], rowvar=False))[0]
        self.assertGreater(table.eigenvalues[0], 1.5 * sample_min)
        self.assertTrue(np.all(np.diff(table.eigenvalues) > -0.2))

    def test_calibration_must_precede_validation(self):
        panel = make_panel(0.01 * np.random.default_rng(14).standard_normal((100, 4)))
        with self.assertRaises(LeakageError):
            calibrate_ao(panel, n=4, dt_in=20, dt_out=5, samples=2, validation_start=panel.dates[50])

    def test_csv_header_and_reload(self):
        table = AoTable(n=3, dt_in=50, dt_out=5, span_start='2000-01-03', span_end='2001-01-02',
                        eigenvalues=np.array([0.5, 0.9, 1.6]), samples=10)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'ao.csv'
            table.to_csv(path)
            lines = path.read_text(encoding='utf-8').splitlines()
            loaded = AoTable.from_csv(path)
        self.assertTrue(lines[0].startswith('# n=3 dt_in=50'))
        self.assertEqual(lines[1], 'rank,eigenvalue')
        self.assertEqual(loaded.key, (3, 50))
        np.testing.assert_array_equal(loaded.eigenvalues, table.eigenvalues)

    def test_csv_without_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'ao.csv'
            path.write_text('rank,eigenvalue\n1,1.0\n', encoding='utf-8')
            with self.assertRaises(DataValidationError):
                AoTable.from_csv(path)


class UnivariateWeightsTest(unittest.TestCase):

    def test_equal_variances(self):
        np.testing.assert_allclose(erb_weights([2.0, 2.0, 2.0]).weights, 1 / 3)

    def test_erb(self):
        np.testing.assert_allclose(erb_weights([1.0, 4.0]).weights, [0.8, 0.2])

    def test_mcw(self):
        np.testing.assert_allclose(mcw_weights([3.0, 1.0]).weights, [0.75, 0.25])

    def test_non_positive_input(self):
        with self.assertRaises(DataValidationError):
            erb_weights([1.0, 0.0])
        with self.assertRaises(DataValidationError):
            mcw_weights([1.0, -2.0])


class DispatchTest(unittest.TestCase):
    """정제 방식 분기"""

    def setUp(self):
        self.returns, self.population = one_factor_returns(10, 60, 0.3, np.random.default_rng(15))

    def assert_valid_correlation(self, corr):
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)
        np.testing.assert_allclose(corr, corr.T, atol=1e-14)
        self.assertGreater(np.linalg.eigvalsh(corr)[0], -1e-10)

    def test_every_tag_gives_psd_unit_diagonal(self):
        table = AoTable(n=10, dt_in=60, dt_out=5, span_start='a', span_end='b',
                        eigenvalues=np.linspace(0.5, 1.5, 10), samples=1)
        for tag in CleanerTag:
            corr = clean_correlation(self.returns, CleanConfig(tag=tag), ao_tables={table.key: table},
                                     reference=self.population)
            self.assert_valid_correlation(corr)

    def test_benchmark_covariance_keeps_sample_variances(self):
        cov = estimate_covariance(self.returns, CleanConfig(tag=CleanerTag.QIS))
        np.testing.assert_allclose(np.diag(cov), self.returns.var(axis=0), rtol=1e-10)

    def test_mle_tag_is_sample_correlation(self):
        corr = clean_correlation(self.returns, CleanConfig(tag=CleanerTag.MLE))
        np.testing.assert_allclose(corr, np.corrcoef(self.returns, rowvar=False), atol=1e-12)

    def test_oracle_needs_reference(self):
        with self.assertRaises(ConfigError):
            clean_correlation(self.returns, CleanConfig(tag=CleanerTag.ORACLE))

    def test_ao_needs_table(self):
        with self.assertRaises(ConfigError):
            clean_correlation(self.returns, CleanConfig(tag=CleanerTag.AO))

    def test_spectrum_maps(self):
        values = np.array([0.3, 0.9, 2.8])
        np.testing.assert_array_equal(spectrum_map(CleanerTag.MLE)(values, 0.1), values)
        self.assertEqual(spectrum_map(CleanerTag.QIS)(values, 0.1).shape, (3,))
        with self.assertRaises(ConfigError):
            spectrum_map(CleanerTag.PM)
