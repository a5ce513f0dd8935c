import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError
from panel.ingest import ingest_csv
from panel.models import FilterConfig, InnovationLaw, PanelStore, ReturnPanel, SyntheticMarketSpec
from panel.synthetic import build_synthetic_store, generate_synthetic
from panel.universe import filter_universe, low_variance_outlier_mask

HEADER = "date,asset_id,open,close,adj_factor,volume,shares_outstanding,dividend_cash,split_ratio,auction_flag,delist_flag"


def write_csv(directory: str, lines, header: str = HEADER) -> Path:
    path = Path(directory) / "panel.csv"
    path.write_text("\n".join([header] + list(lines)) + "\n", encoding="utf-8")
    return path


def compliant_frame(n_assets=8, n_days=80, seed=3) -> pd.DataFrame:
    """모든 필터를 통과하는 독립 수익률 자산들의 레코드"""
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range("2020-01-01", periods=n_days)
    rows = []
    for j in range(n_assets):
        closes = 100.0 * np.cumprod(1.0 + 0.01 * rng.standard_normal(n_days))
        shares = 1e8 * 2.0 ** j
        for t, d in enumerate(dates):
            rows.append((d, f"S{j}", closes[t], closes[t], 1.0, 0.02 * shares, shares, 0.0, 1.0, 1.0, 0.0))
    return pd.DataFrame(rows, columns=HEADER.split(","))


def loose_config(**overrides) -> FilterConfig:
    values = dict(history_days=60, auction_window=20, iqr_multiplier=100.0)
    values.update(overrides)
    return FilterConfig(**values)


class IngestCsvTest(unittest.TestCase):
    """CSV 수집"""

    def test_single_return_from_adjusted_closes(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-04,AAA,,100,1,1000,1e7,0,1,1,0",
                "2021-01-05,AAA,,101,1,1000,1e7,0,1,1,0",
            ])
            panel, store = ingest_csv(path)
        self.assertEqual(panel.returns.shape, (1, 1))
        self.assertAlmostEqual(panel.returns[0, 0], 0.01, places=12)
        self.assertEqual(len(store.dates), 2)

    def test_three_assets_five_days(self):
        closes = {
            "A": [100, 102, 101, 103, 104],
            "B": [50, 50, 51, 49, 50],
            "C": [20, 21, 22, 21, 20],
        }
        # C는 3일째 2:1 분할 (원시 종가 절반, 조정계수 2)
        adj = {"A": [1] * 5, "B": [1] * 5, "C": [1, 1, 2, 2, 2]}
        raw_c = [20, 21, 11, 10.5, 10]
        dates = ["2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07", "2021-01-08"]
        lines = []
        for t, d in enumerate(dates):
            lines.append(f"{d},A,,{closes['A'][t]},{adj['A'][t]},1,1,0,1,1,0")
            lines.append(f"{d},B,,{closes['B'][t]},{adj['B'][t]},1,1,0,1,1,0")
            lines.append(f"{d},C,,{raw_c[t]},{adj['C'][t]},1,1,0,{2 if t == 2 else 1},1,0")
        with tempfile.TemporaryDirectory() as tmp:
            panel, _ = ingest_csv(write_csv(tmp, lines))

        self.assertEqual(panel.returns.shape, (4, 3))
        self.assertEqual(panel.assets, ["A", "B", "C"])
        expected_a = [102 / 100 - 1, 101 / 102 - 1, 103 / 101 - 1, 104 / 103 - 1]
        expected_b = [50 / 50 - 1, 51 / 50 - 1, 49 / 51 - 1, 50 / 49 - 1]
        expected_c = [21 / 20 - 1, 22 / 21 - 1, 21 / 22 - 1, 20 / 21 - 1]
        np.testing.assert_allclose(panel.returns[:, 0], expected_a, rtol=1e-12)
        np.testing.assert_allclose(panel.returns[:, 1], expected_b, rtol=1e-12)
        np.testing.assert_allclose(panel.returns[:, 2], expected_c, rtol=1e-12)
        self.assertAlmostEqual(panel.q, 3 / 4)

    def test_duplicate_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-04,AAA,,100,1,1,1,0,1,1,0",
                "2021-01-04,AAA,,100,1,1,1,0,1,1,0",
            ])
            with self.assertRaises(DataValidationError) as ctx:
                ingest_csv(path)
        self.assertIn("중복", ctx.exception.message)
        self.assertEqual(ctx.exception.details["line"], 3)

    def test_non_monotone_dates(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-05,AAA,,100,1,1,1,0,1,1,0",
                "2021-01-04,AAA,,101,1,1,1,0,1,1,0",
            ])
            with self.assertRaises(DataValidationError) as ctx:
                ingest_csv(path)
        self.assertEqual(ctx.exception.details["line"], 3)

    def test_malformed_row_reports_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-04,AAA,,100,1,1,1,0,1,1,0",
                "2021-01-05,AAA,,abc,1,1,1,0,1,1,0",
            ])
            with self.assertRaises(DataValidationError) as ctx:
                ingest_csv(path)
        self.assertEqual(ctx.exception.details["line"], 3)
        self.assertEqual(ctx.exception.details["column"], "close")

    def test_non_positive_price_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, ["2021-01-04,AAA,0,100,1,1,1,0,1,1,0"])
            with self.assertRaises(DataValidationError):
                ingest_csv(path)

    def test_return_bound_enforced(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-04,AAA,,100,1,1,1,0,1,1,0",
                "2021-01-05,AAA,,250,1,1,1,0,1,1,0",
            ])
            with self.assertRaises(DataValidationError) as ctx:
                ingest_csv(path)
        self.assertEqual(ctx.exception.details["line"], 3)

    def test_issuer_column_defaults_to_asset(self):
        header = HEADER + ",issuer_id"
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(tmp, [
                "2021-01-04,AAA,,100,1,1,1,0,1,1,0,ISS",
                "2021-01-04,BBB,,100,1,1,1,0,1,1,0,",
            ], header=header)
            _, store = ingest_csv(path)
        self.assertEqual(store.issuers(), {"AAA": "ISS", "BBB": "BBB"})


class SyntheticMarketTest(unittest.TestCase):
    """합성 팩터 시장"""

    def test_no_factors_scaled_identity(self):
        spec = SyntheticMarketSpec(n_assets=5, n_days=50, n_factors=0, idio_vol_min=0.2, idio_vol_max=0.2)
        _, cov = generate_synthetic(spec)
        np.testing.assert_allclose(cov, (0.2 ** 2 / 252) * np.eye(5), rtol=1e-12)

    def test_same_seed_bit_identical(self):
        spec = SyntheticMarketSpec(n_assets=10, n_days=100, innovation=InnovationLaw.STUDENT_T, nu=5, seed=11)
        a, cov_a = generate_synthetic(spec)
        b, cov_b = generate_synthetic(spec)
        np.testing.assert_array_equal(a.returns, b.returns)
        np.testing.assert_array_equal(cov_a, cov_b)
        self.assertTrue(a.dates.equals(b.dates))

    def test_sample_covariance_converges(self):
        spec = SyntheticMarketSpec(n_assets=100, n_days=10000, n_factors=1, loading_scale=0.02,
                                   idio_vol_min=0.1, idio_vol_max=0.2, seed=5)
        panel, cov = generate_synthetic(spec)
        sample = panel.returns.T @ panel.returns / panel.n_days
        error = np.linalg.norm(sample - cov) / np.linalg.norm(cov)
        self.assertLess(error, 0.05)

    def test_student_t_requires_finite_variance(self):
        with self.assertRaises(ValueError):
            SyntheticMarketSpec(innovation=InnovationLaw.STUDENT_T, nu=2.0)

    def test_store_reproduces_panel_returns(self):
        spec = SyntheticMarketSpec(n_assets=6, n_days=200, split_rate=0.01, dividend_rate=0.02, seed=9)
        panel, _ = generate_synthetic(spec)
        store = build_synthetic_store(spec, panel)
        rebuilt = store.return_panel()
        self.assertEqual(rebuilt.assets, panel.assets)
        np.testing.assert_allclose(rebuilt.returns, panel.returns, rtol=1e-9, atol=1e-12)
        self.assertTrue((store.wide('split_ratio').to_numpy() > 0).all())

    def test_store_csv_round_trip(self):
        spec = SyntheticMarketSpec(n_assets=3, n_days=20, split_rate=0.05, seed=2)
        panel, _ = generate_synthetic(spec)
        store = build_synthetic_store(spec, panel)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "store.csv"
            store.to_csv(path)
            reread, _ = ingest_csv(path)
        np.testing.assert_allclose(reread.returns, panel.returns, rtol=1e-7, atol=1e-10)


class LowVarianceMaskTest(unittest.TestCase):
    """저분산 이상치"""

    def test_all_equal_excludes_nothing(self):
        vols = np.log(np.full(6, 0.3))
        mask, degenerate = low_variance_outlier_mask([vols, vols])
        self.assertFalse(mask.any())
        self.assertFalse(degenerate)

    def test_tiny_volatility_excluded(self):
        vols = np.log(np.array([0.28, 0.29, 0.30, 0.31, 0.32, 1e-6]))
        mask, _ = low_variance_outlier_mask([vols, vols])
        np.testing.assert_array_equal(mask, [False] * 5 + [True])

    def test_below_fence_in_one_window_retained(self):
        short = np.log(np.array([0.28, 0.29, 0.30, 0.31, 0.32, 1e-6]))
        long = np.log(np.array([0.28, 0.29, 0.30, 0.31, 0.32, 0.30]))
        mask, _ = low_variance_outlier_mask([short, long])
        self.assertFalse(mask.any())

    def test_degenerate_window_flagged(self):
        with np.errstate(divide='ignore'):
            zeros = np.log(np.zeros(5))
        mask, degenerate = low_variance_outlier_mask([zeros, zeros])
        self.assertFalse(mask.any())
        self.assertTrue(degenerate)

    def test_too_few_assets(self):
        with self.assertRaises(DataValidationError):
            low_variance_outlier_mask([np.zeros(3)])


class FilterUniverseTest(unittest.TestCase):
    """유니버스 필터"""

    def setUp(self):
        self.frame = compliant_frame()
        self.decision = pd.bdate_range("2020-01-01", periods=80)[-1]

    def test_all_compliant_retained(self):
        store = PanelStore(self.frame)
        result = filter_universe(store, self.decision, 8, loose_config())
        self.assertEqual(sorted(result.assets), [f"S{j}" for j in range(8)])
        self.assertFalse(result.shortfall)
        # 시가총액 내림차순
        self.assertEqual(result.assets[0], "S7")

    def test_low_price_day_excluded(self):
        frame = self.frame.copy()
        day_before = pd.bdate_range("2020-01-01", periods=80)[-2]
        frame.loc[(frame['asset_id'] == 'S3') & (frame['date'] == day_before), 'close'] = 5.0
        result = filter_universe(PanelStore(frame), self.decision, 8, loose_config())
        self.assertNotIn("S3", result.assets)
        self.assertEqual(result.excluded['price'], 1)

    def test_share_classes_keep_larger_cap(self):
        frame = self.frame.copy()
        frame['issuer_id'] = frame['asset_id']
        frame.loc[frame['asset_id'].isin(['S1', 'S5']), 'issuer_id'] = 'ISSUER'
        result = filter_universe(PanelStore(frame), self.decision, 8, loose_config())
        self.assertIn("S5", result.assets)
        self.assertNotIn("S1", result.assets)

    def test_highly_correlated_duplicate_removed(self):
        frame = self.frame.copy()
        source = frame[frame['asset_id'] == 'S6'].copy()
        source['asset_id'] = 'S6B'
        source['shares_outstanding'] = 1e6 * 50
        source['volume'] = 0.02 * source['shares_outstanding']
        frame = pd.concat([frame, source], ignore_index=True)
        result = filter_universe(PanelStore(frame), self.decision, 9, loose_config())
        self.assertIn("S6", result.assets)
        self.assertNotIn("S6B", result.assets)
        self.assertTrue(result.shortfall)

    def test_delisting_lookahead_excluded(self):
        frame = self.frame.copy()
        frame.loc[(frame['asset_id'] == 'S2') & (frame['date'] == self.decision), 'delist_flag'] = 1.0
        result = filter_universe(PanelStore(frame), self.decision, 8, loose_config())
        self.assertNotIn("S2", result.assets)

    def test_thin_volume_excluded(self):
        frame = self.frame.copy()
        day_before = pd.bdate_range("2020-01-01", periods=80)[-2]
        mask = (frame['asset_id'] == 'S4') & (frame['date'] == day_before)
        frame.loc[mask, 'volume'] = 0.001 * frame.loc[mask, 'shares_outstanding']
        result = filter_universe(PanelStore(frame), self.decision, 8, loose_config())
        self.assertNotIn("S4", result.assets)

    def test_shortfall_flag(self):
        result = filter_universe(PanelStore(self.frame), self.decision, 20, loose_config())
        self.assertEqual(len(result.assets), 8)
        self.assertTrue(result.shortfall)

    def test_idempotent(self):
        spec = SyntheticMarketSpec(n_assets=30, n_days=120, delist_rate=0.2, seed=4)
        panel, _ = generate_synthetic(spec)
        store = build_synthetic_store(spec, panel)
        config = FilterConfig(history_days=80, auction_window=40, min_price=0.0, max_price=1e9)
        first = filter_universe(store, store.dates[100], 15, config)
        second = filter_universe(store, store.dates[100], 15, config, candidates=first.assets)
        self.assertEqual(first.assets, second.assets)

    def test_future_records_not_consulted(self):
        store = PanelStore(self.frame)
        before = filter_universe(store, self.decision, 5, loose_config())
        frame = self.frame.copy()
        frame.loc[frame['date'] == self.decision, 'close'] = 15000.0
        frame.loc[frame['date'] == self.decision, 'volume'] = 0.0
        after = filter_universe(PanelStore(frame), self.decision, 5, loose_config())
        self.assertEqual(before.assets, after.assets)

    def test_insufficient_history(self):
        with self.assertRaises(DataValidationError):
            filter_universe(PanelStore(self.frame), self.decision, 8, loose_config(history_days=200))


class ReturnPanelTest(unittest.TestCase):

    def test_window_rejects_missing(self):
        returns = np.array([[0.01, np.nan], [0.02, 0.01]])
        panel = ReturnPanel(pd.bdate_range("2021-01-01", periods=2), ["A", "B"], returns)
        with self.assertRaises(DataValidationError):
            panel.window(0, 2)
        np.testing.assert_array_equal(panel.complete_assets(0, 2), [0])
