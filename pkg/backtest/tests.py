import tempfile
import unittest
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from backtest import (
    BacktestConfig, ExperimentConfig, ReplicationRunner, Strategy, compare_estimators, compute_metrics,
    max_drawdown, max_drawdown_by_year, paired_bootstrap, run_frictionless, strategy_for_market,
    turnover, write_backtest_report,
)
from backtest.tasks import run_replication_task
from config.exceptions import ConfigError, DataValidationError, LeakageError, ShapeError
from estimators import CleanerTag
from network.model import GmvNetwork
from panel import ReturnPanel, SyntheticMarketSpec, generate_synthetic, load_market
from portfolio.assembly import WeightConstraint
from training import Checkpoint, CheckpointSchedule, TrainConfig, TrainProfile, train


def small_market(n_assets=8, n_days=160, seed=5):
    return load_market(synth=SyntheticMarketSpec(n_assets=n_assets, n_days=n_days, n_factors=2, seed=seed))


def small_config(**overrides):
    base = dict(strategy='MLE', n=6, rebalances=4, interval=5, dt_in=30, dt_out=5, replications=3, seed=2)
    base.update(overrides)
    return BacktestConfig(**base)


class MetricsTest(unittest.TestCase):
    """성과 지표"""

    def test_constant_weights_have_no_turnover(self):
        w = pd.Series([0.2, 0.3, 0.5], index=['a', 'b', 'c'])
        self.assertEqual(turnover([w, w.copy(), w.copy()]), 0.0)

    def test_turnover_aligns_assets(self):
        old = pd.Series([0.5, 0.5], index=['a', 'b'])
        new = pd.Series([0.5, 0.5], index=['a', 'c'])
        self.assertAlmostEqual(turnover([old, new]), 0.5)

    def test_equal_weights_effective_assets(self):
        w = pd.Series(np.full(4, 0.25))
        metrics = compute_metrics([0.01, -0.005, 0.002], [w, w])
        self.assertAlmostEqual(metrics['n_eff'], 4.0)
        self.assertAlmostEqual(metrics['leverage'], 1.0)

    def test_monotone_curve_has_no_drawdown(self):
        self.assertEqual(max_drawdown([0.01, 0.02, 0.0, 0.005]), 0.0)

    def test_drawdown_value(self):
        self.assertAlmostEqual(max_drawdown([0.1, -0.5, 0.2]), 0.5)

    def test_drawdown_by_year(self):
        dates = pd.to_datetime(['2020-12-30', '2020-12-31', '2021-01-04', '2021-01-05'])
        series = pd.Series([0.1, -0.1, 0.05, -0.2], index=dates)
        yearly = max_drawdown_by_year(series)
        self.assertEqual(list(yearly.index), [2020, 2021])
        self.assertAlmostEqual(yearly[2020], 0.1)
        self.assertAlmostEqual(yearly[2021], 0.2)

    def test_zero_volatility_gives_nan_ratios(self):
        metrics = compute_metrics([0.0, 0.0, 0.0], [pd.Series([1.0])])
        self.assertTrue(np.isnan(metrics['sharpe']))
        self.assertTrue(np.isnan(metrics['sortino']))
        self.assertEqual(metrics['ann_volatility'], 0.0)

    def test_annualization(self):
        r = np.array([0.01, -0.01, 0.02, 0.0])
        metrics = compute_metrics(r, [pd.Series([1.0])])
        self.assertAlmostEqual(metrics['ann_volatility'], r.std() * np.sqrt(252))
        self.assertAlmostEqual(metrics['ann_return'], r.mean() * 252)
        self.assertAlmostEqual(metrics['sharpe'], metrics['ann_return'] / metrics['ann_volatility'])

    def test_single_period_rejected(self):
        with self.assertRaises(ShapeError):
            compute_metrics([0.01], [pd.Series([1.0])])

    def test_paired_bootstrap(self):
        a = np.linspace(1.0, 2.0, 30)
        result = paired_bootstrap(a, a + 0.1, samples=2000)
        self.assertAlmostEqual(result['mean_diff'], -0.1)
        self.assertAlmostEqual(result['p_value'], 1.0 / 2001)
        self.assertEqual(paired_bootstrap(a, a, samples=100)['p_value'], 1.0)


class FrictionlessBacktestTest(unittest.TestCase):
    """무마찰 부트스트랩 백테스트"""

    @classmethod
    def setUpClass(cls):
        cls.market = small_market()

    def run_config(self, config, **kwargs):
        strategy = strategy_for_market(config, self.market, **kwargs)
        return run_frictionless(self.market.panel, config, strategy)

    def test_single_asset_follows_asset(self):
        rng = np.random.default_rng(4)
        dates = pd.bdate_range('2010-01-04', periods=80)
        panel = ReturnPanel(dates=dates, assets=['X'], returns=0.01 * rng.standard_normal((80, 1)))
        config = small_config(n=1, replications=2)
        runner = ReplicationRunner(panel, config, Strategy('QIS'))
        for k in range(2):
            result = runner.run(k)
            expected = panel.to_frame()['X'].loc[result.daily_returns.index]
            np.testing.assert_allclose(result.daily_returns.to_numpy(), expected.to_numpy(), atol=1e-15)
            self.assertEqual(result.metrics['turnover'], 0.0)

    def test_report_shape(self):
        report = self.run_config(small_config())
        self.assertEqual(len(report.replications), 3)
        summary = report.summary_frame()
        self.assertEqual(summary['replication'].iloc[-1], 'mean')
        self.assertTrue((report.replications['n_eff'] >= 1.0 - 1e-12).all())
        self.assertTrue((report.replications['n_eff'] <= 6.0 + 1e-12).all())
        self.assertTrue((report.replications['leverage'] >= 1.0 - 1e-12).all())
        self.assertIn('ann_volatility', report.table())

    def test_long_only_leverage_is_one(self):
        report = self.run_config(small_config(constraint=WeightConstraint.LONG_ONLY, strategy='LS'))
        np.testing.assert_allclose(report.replications['leverage'], 1.0, atol=1e-10)

    def test_loss_matches_recomputation(self):
        config = small_config(strategy='PM')
        panel = self.market.panel
        runner = ReplicationRunner(panel, config, strategy_for_market(config, self.market))
        result = runner.run(1)
        t0 = panel.dates.get_loc(pd.Timestamp(result.start_date))
        losses = []
        for k, w in enumerate(result.weights):
            t = t0 + k * config.interval
            cols = panel.asset_index(list(w.index))
            oos = panel.returns[t + 1:t + 1 + config.dt_out][:, cols]
            losses.append(len(w) / config.dt_out * np.sum((oos @ w.to_numpy()) ** 2))
        self.assertAlmostEqual(result.metrics['loss'], float(np.mean(losses)), places=14)

    def test_mcw_matches_buy_and_hold(self):
        config = small_config(strategy='MCW', n=8, replications=1)
        panel, store = self.market.panel, self.market.store
        result = ReplicationRunner(panel, config, strategy_for_market(config, self.market)).run(0)
        t0 = panel.dates.get_loc(pd.Timestamp(result.start_date))
        expected = []
        for k in range(config.rebalances):
            t = t0 + k * config.interval
            caps = store.market_cap.loc[panel.dates[t - 1], panel.assets].to_numpy()
            holdings = caps / caps.sum()
            for row in panel.returns[t + 1:t + 1 + config.interval]:
                before = holdings.sum()
                holdings = holdings * (1.0 + row)
                expected.append(holdings.sum() / before - 1.0)
        np.testing.assert_allclose(result.daily_returns.to_numpy(), expected, atol=1e-10)

    def test_aggregate_ignores_replication_order(self):
        report = self.run_config(small_config(replications=4))
        shuffled = report.replications.sample(frac=1.0, random_state=3)
        pd.testing.assert_series_equal(
            shuffled[list(report.aggregate.index)].mean(axis=0), report.aggregate, rtol=1e-14,
        )

    def test_threads_do_not_change_results(self):
        serial = self.run_config(small_config(replications=4))
        threaded = self.run_config(small_config(replications=4, threads=3))
        pd.testing.assert_frame_equal(serial.replications, threaded.replications)

    def test_seed_determinism(self):
        first = self.run_config(small_config(strategy='QIS'))
        second = self.run_config(small_config(strategy='QIS'))
        pd.testing.assert_frame_equal(first.replications, second.replications)

    def test_insufficient_span(self):
        with self.assertRaises(DataValidationError):
            self.run_config(small_config(dt_in=150))

    def test_missing_assets_are_replaced(self):
        returns = self.market.panel.returns.copy()
        returns[100:, 0] = np.nan
        panel = ReturnPanel(dates=self.market.panel.dates, assets=self.market.panel.assets, returns=returns)
        runner = ReplicationRunner(panel, small_config(), Strategy('MLE'))
        basket, swapped = runner.refresh_basket(np.array([0, 1, 2]), 95, np.random.default_rng(0))
        self.assertEqual(swapped, 1)
        self.assertEqual(basket.size, 3)
        self.assertNotIn(0, basket)
        self.assertNotIn(0, runner.eligible(95))
        self.assertIn(0, runner.eligible(90))

    def test_every_estimator_runs(self):
        for tag in ['MLE', 'LS', 'QIS', 'PM', 'CLIP', 'ORACLE', 'ERB', 'MCW']:
            report = self.run_config(small_config(strategy=tag, replications=1))
            self.assertTrue(np.isfinite(report.aggregate['loss']), tag)

    def test_unknown_strategy(self):
        with self.assertRaises(ValidationError):
            small_config(strategy='XYZ')

    def test_report_files(self):
        report = self.run_config(small_config(replications=2))
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_backtest_report(report, tmp, xlsx=True)
            frame = pd.read_csv(paths[0])
            self.assertEqual(str(frame['replication'].iloc[-1]), 'mean')
            import openpyxl
            wb = openpyxl.load_workbook(paths[-1])
            self.assertEqual(wb.sheetnames, ['복제별 지표', '연도별 낙폭'])
            header = wb['복제별 지표'].cell(row=1, column=1)
            self.assertEqual(header.value, 'replication')
            self.assertTrue(header.font.bold)


class CheckpointStrategyTest(unittest.TestCase):
    """NN 전략의 보정 시점 검사"""

    @classmethod
    def setUpClass(cls):
        cls.market = small_market()

    def strategy(self, calibration_end):
        ckpt = Checkpoint.from_network(GmvNetwork(30, width=4, seed=1), calibration_end=calibration_end, seed=1)
        return Strategy('NN', schedule=CheckpointSchedule([ckpt]))

    def test_future_calibration_rejected(self):
        runner = ReplicationRunner(self.market.panel, small_config(strategy='NN'), self.strategy(date(2100, 1, 1)))
        with self.assertRaises(LeakageError):
            runner.run(0)

    def test_past_calibration_runs(self):
        runner = ReplicationRunner(self.market.panel, small_config(strategy='NN'), self.strategy(date(1999, 12, 31)))
        result = runner.run(0)
        self.assertTrue(np.isfinite(result.metrics['loss']))
        for w in result.weights:
            self.assertAlmostEqual(float(w.sum()), 1.0, places=12)

    def test_nn_needs_checkpoints(self):
        with self.assertRaises(ConfigError):
            Strategy('NN')


class ExperimentTest(unittest.TestCase):
    """합성 시장 추정기 비교"""

    def test_small_experiment(self):
        result = compare_estimators(ExperimentConfig(n=8, dt_in=40, trials=4))
        self.assertEqual(list(result.variances.columns), ['MLE', 'LS', 'QIS', 'ORACLE'])
        self.assertEqual(len(result.variances), 4)
        self.assertTrue((result.variances.to_numpy() > 0).all())
        self.assertEqual(set(result.comparisons), {'LS', 'QIS', 'ORACLE'})

    def test_network_column(self):
        result = compare_estimators(ExperimentConfig(n=6, dt_in=20, trials=2), networks=[GmvNetwork(20, width=4)])
        self.assertIn('NN', result.losses.columns)

    def test_network_window_mismatch(self):
        with self.assertRaises(ConfigError):
            compare_estimators(ExperimentConfig(n=6, dt_in=20, trials=2), networks=[GmvNetwork(30, width=4)])

    @pytest.mark.slow
    def test_cleaning_ordering(self):
        result = compare_estimators(ExperimentConfig(n=50, dt_in=200, trials=200))
        means = result.variances.mean(axis=0)
        self.assertLessEqual(means['ORACLE'], means['QIS'])
        self.assertLessEqual(means['QIS'], means['MLE'])

    @pytest.mark.slow
    def test_desk_trained_network_beats_mle(self):
        panel, _ = generate_synthetic(SyntheticMarketSpec(n_assets=80, n_days=800, seed=11))
        config = TrainConfig.for_profile(TrainProfile.DESK, seed=4)
        trained = train(panel, config)
        self.assertEqual(len(trained.history), 2)
        network = trained.checkpoint.to_network()

        # q = 100/120, MLE 분산 팽창 약 1/(1 − q) = 6배
        result = compare_estimators(
            ExperimentConfig(n=100, dt_in=config.dt_in, trials=200, tags=[CleanerTag.MLE], seed=3),
            networks=[network],
        )
        losses = result.losses.mean(axis=0)
        self.assertLess(losses['NN'], losses['MLE'])
        self.assertLess(result.variances['NN'].mean(), result.variances['MLE'].mean())
        comparison = paired_bootstrap(result.losses['NN'], result.losses['MLE'], seed=3)
        self.assertEqual(comparison, result.comparisons['NN'])
        self.assertLess(comparison['p_value'], 0.05)


class ReplicationTaskTest(unittest.TestCase):

    def test_task_returns_metrics(self):
        result = run_replication_task.apply(kwargs={
            'config': small_config(strategy='QIS', replications=1).model_dump(mode='json'),
            'replication': 0,
            'synth': {'n_assets': 10, 'n_days': 120, 'n_factors': 1},
        }).get()
        self.assertEqual(result['status'], 'success')
        self.assertIn('sharpe', result['metrics'])

    def test_task_reports_invalid_config(self):
        result = run_replication_task.apply(kwargs={'config': {'strategy': 'XYZ'}, 'replication': 0}).get()
        self.assertFalse(result['success'])
        self.assertEqual(result['error_code'], 'VALIDATION_ERROR')
