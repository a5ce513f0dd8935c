import tempfile
import unittest
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from backtest import Strategy
from broker import (
    AccountState, FeeSchedule, ReferenceRates, SimulationConfig, accrue_daily, estimate_prices, execute,
    rebalance, round_half_away, run_simulation, to_micro, write_simulation_report,
)
from broker.tasks import simulate_task
from config.exceptions import DataValidationError, SimulationError
from network.model import GmvNetwork
from panel import PanelStore, SyntheticMarketSpec, load_market
from training import Checkpoint, CheckpointSchedule


def make_store(closes, opens=None, splits=None, dividends=None, start='2021-03-01'):
    """
    자산별 종가 목록으로 레코드 저장소 생성

    opens/splits/dividends: {asset: {일 위치: 값}}
    """
    opens, splits, dividends = opens or {}, splits or {}, dividends or {}
    rows = []
    for asset, series in closes.items():
        dates = pd.bdate_range(start, periods=len(series))
        factor = 1.0
        for i, (when, close) in enumerate(zip(dates, series)):
            split = splits.get(asset, {}).get(i, 1.0)
            dividend = dividends.get(asset, {}).get(i, 0.0)
            factor *= split * (1.0 + dividend / close)
            rows.append({
                'date': when, 'asset_id': asset, 'open': opens.get(asset, {}).get(i, np.nan), 'close': close,
                'adj_factor': factor, 'volume': 1e6, 'shares_outstanding': 1e8, 'dividend_cash': dividend,
                'split_ratio': split, 'auction_flag': 1.0, 'delist_flag': 0.0,
            })
    return PanelStore(pd.DataFrame(rows))


def zero_rate_fees():
    return FeeSchedule(debit_spread=0.0)


class FeeScheduleTest(unittest.TestCase):
    """수수료 일정"""

    def setUp(self):
        self.fees = FeeSchedule()

    def test_ticket_floor(self):
        self.assertEqual(to_micro(self.fees.commission(100, 0)), 350_000)
        self.assertEqual(self.fees.commission(0, 0), 0.0)

    def test_notional_fee(self):
        self.assertEqual(to_micro(self.fees.notional_fee(5000.0)), 4_225_000)

    def test_sec_fee_on_sells_only(self):
        self.assertEqual(to_micro(self.fees.sec_fee(50_000.0, -1000)), 5_785_000)
        self.assertEqual(self.fees.sec_fee(50_000.0, 1000), 0.0)

    def test_tier_boundary_split_within_order(self):
        self.assertAlmostEqual(self.fees.commission(1000, 299_500), 500 * 0.0035 + 500 * 0.0020)
        self.assertAlmostEqual(self.fees.commission(1000, 400_000), 1000 * 0.0020)

    def test_fees_monotone_in_notional(self):
        totals = []
        for shares in range(1, 3000, 7):
            notional = shares * 50.0
            totals.append(self.fees.commission(shares, 299_000) + self.fees.notional_fee(notional)
                          + self.fees.sec_fee(notional, -shares))
        self.assertTrue(np.all(np.diff(totals) >= -1e-12))

    def test_debit_interest(self):
        daily = self.fees.daily_interest(-100_000.0, 0.05)
        self.assertAlmostEqual(daily, 18.0556, places=4)
        self.assertEqual(to_micro(daily), 18_055_556)
        self.assertEqual(self.fees.daily_interest(100_000.0, 0.05), 0.0)
        self.assertEqual(self.fees.daily_interest(0.0, 0.05), 0.0)

    def test_negative_rate_rejected(self):
        with self.assertRaises(ValidationError):
            FeeSchedule(sec_rate=-1.0)

    def test_half_away_rounding(self):
        np.testing.assert_array_equal(round_half_away([2.5, -2.5, 1.4, -0.5, 0.49]), [3, -3, 1, -1, 0])


class ExecutionTest(unittest.TestCase):
    """종가 체결 수수료"""

    def test_buy_fees(self):
        state = AccountState.opening(date(2021, 3, 1), 1e6)
        trade = execute(state, 'A', 100, 50.0, date(2021, 3, 1), FeeSchedule())
        self.assertEqual(trade.commission, 350_000)
        self.assertEqual(trade.notional_fee, 4_225_000)
        self.assertEqual(trade.sec_fee, 0)
        self.assertEqual(state.positions['A'], 100)
        self.assertEqual(state.month_volume, 100)

    def test_sell_fees(self):
        state = AccountState.opening(date(2021, 3, 1), 1e6)
        state.positions['A'] = 1000
        trade = execute(state, 'A', -1000, 50.0, date(2021, 3, 1), FeeSchedule())
        self.assertEqual(trade.sec_fee, 5_785_000)
        self.assertEqual(trade.commission, 3_500_000)
        self.assertNotIn('A', state.positions)


class PriceEstimateTest(unittest.TestCase):

    def test_open_used_when_present(self):
        store = make_store({'A': [100.0, 101.0]}, opens={'A': {1: 100.5}})
        self.assertEqual(estimate_prices(store.dates[1], store, ['A'])['A'], 100.5)

    def test_split_adjusted_previous_close(self):
        store = make_store({'A': [100.0, 51.0]}, splits={'A': {1: 2.0}})
        self.assertEqual(estimate_prices(store.dates[1], store, ['A'])['A'], 50.0)

    def test_no_history(self):
        store = make_store({'A': [100.0, 101.0]})
        with self.assertRaises(DataValidationError):
            estimate_prices(store.dates[0], store, ['A'])


class AccrualTest(unittest.TestCase):
    """일간 이자·분할·배당"""

    def test_debit_interest_one_day(self):
        store = make_store({'A': [10.0, 10.0, 10.0]}, start='2021-03-02')
        state = AccountState.opening(store.dates[0].date(), -100_000.0)
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule(), ReferenceRates(constant=0.05))
        self.assertEqual(flows.interest, 18_055_556)
        self.assertEqual(state.cash, -100_000_000_000 - 18_055_556)
        self.assertEqual(state.totals['interest'], 18_055_556)

    def test_interest_over_weekend(self):
        store = make_store({'A': [10.0, 10.0]}, start='2021-03-05')
        state = AccountState.opening(store.dates[0].date(), -36_000.0)
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule(debit_spread=0.0), ReferenceRates(constant=0.1))
        self.assertEqual((store.dates[1] - store.dates[0]).days, 3)
        self.assertEqual(flows.interest, to_micro(36_000 * 0.1 * 3 / 360))

    def test_credit_balance_earns_nothing(self):
        store = make_store({'A': [10.0, 10.0]})
        state = AccountState.opening(store.dates[0].date(), 500_000.0)
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule(), ReferenceRates(constant=0.05))
        self.assertEqual(flows.interest, 0)
        self.assertEqual(state.cash, to_micro(500_000.0))

    def test_split_preserves_value(self):
        store = make_store({'A': [100.0, 50.0]}, splits={'A': {1: 2.0}})
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.positions['A'] = 100
        before = state.nlv({'A': 100.0})
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule())
        self.assertEqual(state.positions['A'], 200)
        self.assertEqual(flows.trades, 0)
        self.assertEqual(state.nlv({'A': 50.0}), before)

    def test_fractional_split_paid_in_cash(self):
        store = make_store({'A': [90.0, 60.0]}, splits={'A': {1: 1.5}})
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.positions['A'] = 101
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule())
        self.assertEqual(state.positions['A'], 151)
        self.assertEqual(flows.trades, to_micro(0.5 * 60.0))

    def test_dividend_credited(self):
        store = make_store({'A': [20.0, 19.5]}, dividends={'A': {1: 0.5}})
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.positions['A'] = 200
        flows = accrue_daily(state, store.dates[1], store, FeeSchedule())
        self.assertEqual(flows.dividends, 100_000_000)
        self.assertEqual(state.cash, 100_000_000)

    def test_month_volume_reset(self):
        store = make_store({'A': [10.0, 10.0]}, start='2021-03-31')
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.month_volume = 5000
        accrue_daily(state, store.dates[1], store, FeeSchedule())
        self.assertEqual(state.month_volume, 0)


class RebalanceTest(unittest.TestCase):

    def test_unchanged_allocation_trades_nothing(self):
        store = make_store({'A': [50.0, 50.0]}, opens={'A': {1: 50.0}})
        state = AccountState.opening(store.dates[0].date(), 5000.0)
        state.positions['A'] = 100
        flows, trades = rebalance(state, {'A': 0.5}, store.dates[1], store, FeeSchedule())
        self.assertEqual(trades, [])
        self.assertEqual(flows.cash_change, 0)
        self.assertEqual(flows.commission + flows.sec, 0)

    def test_target_shares_and_execution_at_close(self):
        store = make_store({'A': [40.0, 41.0], 'B': [20.0, 19.0]}, opens={'A': {1: 40.0}, 'B': {1: 20.0}})
        state = AccountState.opening(store.dates[0].date(), 10_000.0)
        flows, trades = rebalance(state, {'A': 0.6, 'B': 0.4}, store.dates[1], store, FeeSchedule())
        self.assertEqual(state.positions, {'A': 150, 'B': 200})
        self.assertEqual([t.price for t in trades], [41.0, 19.0])
        self.assertEqual(flows.trades, -to_micro(150 * 41.0) - to_micro(200 * 19.0))

    def test_dropped_asset_is_sold(self):
        store = make_store({'A': [40.0, 40.0], 'B': [20.0, 20.0]})
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.positions['B'] = 10
        flows, trades = rebalance(state, {'A': 1.0}, store.dates[1], store, FeeSchedule())
        self.assertEqual(state.positions, {'A': 5})
        self.assertGreater(flows.sec, 0)

    def test_missing_close_rejected(self):
        store = make_store({'A': [40.0, 40.0], 'B': [20.0]})
        state = AccountState.opening(store.dates[0].date(), 0.0)
        state.positions['B'] = 10
        with self.assertRaises(SimulationError):
            rebalance(state, {'A': 1.0}, store.dates[1], store, FeeSchedule(), prices={'A': 40.0, 'B': 20.0})


class SimulationTest(unittest.TestCase):
    """일간 계좌 시뮬레이션"""

    def config(self, **overrides):
        base = dict(strategy='MLE', n=5, interval=5, dt_in=40, use_universe_filter=False)
        base.update(overrides)
        return SimulationConfig(**base)

    def test_all_cash_is_constant(self):
        store = make_store({'A': list(np.linspace(10.0, 20.0, 30))})
        result = run_simulation(self.config(strategy='CASH'), store, None, rates=ReferenceRates(constant=0.05))
        self.assertTrue((result.ledger['nlv'] == to_micro(1_000_000.0)).all())
        self.assertTrue(result.trades.empty)

    def test_single_asset_buy_and_hold(self):
        closes = [20.0, 20.5, 21.0, 20.8, 21.3, 21.9, 22.4, 22.0, 22.6, 23.1]
        store = make_store({'A': closes}, opens={'A': {3: 20.9}})
        config = self.config(n=1, dt_in=2, interval=100)
        result = run_simulation(config, store, Strategy('MLE'), zero_rate_fees())
        shares = int(round_half_away(1_000_000.0 / 20.9))
        fees = FeeSchedule()
        cash = to_micro(1_000_000.0) - to_micro(shares * 20.8) - to_micro(fees.commission(shares, 0)) \
            - to_micro(fees.notional_fee(shares * 20.8))
        expected = [cash + to_micro(shares * c) for c in closes[3:]]
        self.assertEqual(result.ledger['nlv'].tolist(), expected)
        self.assertEqual(len(result.trades), 1)

    def synthetic_run(self, **overrides):
        spec = SyntheticMarketSpec(n_assets=6, n_days=300, n_factors=2, seed=9, split_rate=0.01,
                                   dividend_rate=0.02, missing_open_rate=0.2)
        market = load_market(synth=spec)
        config = self.config(reference_rate=0.05, **overrides)
        return run_simulation(config, market.store, Strategy('MLE', store=market.store))

    def test_accounting_identities(self):
        result = self.synthetic_run()
        ledger = result.ledger
        self.assertGreaterEqual(len(ledger), 250)
        self.assertTrue((ledger['nlv'] == ledger['cash'] + ledger['positions_value']).all())
        previous = np.concatenate([[result.opening_nlv], ledger['cash'].to_numpy()[:-1]])
        flows = ledger['trade_cash'] - ledger['fees_commission'] - ledger['fees_notional'] \
            - ledger['fees_sec'] - ledger['interest'] + ledger['dividends']
        np.testing.assert_array_equal(ledger['cash'].to_numpy() - previous, flows.to_numpy())
        costs = result.costs()
        self.assertEqual(
            costs['nlv_change'],
            costs['trading_pnl'] + costs['dividends'] - costs['fees_commission'] - costs['fees_notional']
            - costs['fees_sec'] - costs['interest'],
        )

    def test_zero_trade_days_have_no_commission(self):
        result = self.synthetic_run()
        traded = set(pd.to_datetime(result.trades['date']))
        quiet = result.ledger[~result.ledger.index.isin(traded)]
        self.assertTrue((quiet['fees_commission'] == 0).all())
        self.assertTrue((quiet['fees_sec'] == 0).all())

    def test_deterministic(self):
        first = self.synthetic_run()
        second = self.synthetic_run()
        pd.testing.assert_frame_equal(first.ledger, second.ledger)

    def test_report_metrics(self):
        result = self.synthetic_run()
        row = result.report.replications.iloc[0]
        self.assertGreater(row['ann_volatility'], 0.0)
        self.assertGreaterEqual(row['n_eff'], 1.0)
        self.assertEqual(len(result.rolling_volatility()), len(result.ledger) - 1)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_simulation_report(result, tmp)
            ledger = pd.read_csv(paths[0])
            self.assertEqual(list(ledger.columns[:10]), [
                'date', 'nlv', 'cash', 'positions_value', 'fees_commission', 'fees_notional', 'fees_sec',
                'interest', 'dividends', 'trade_cash',
            ])

    def test_strategy_failure_aborts(self):
        market = load_market(synth=SyntheticMarketSpec(n_assets=6, n_days=120, n_factors=1))
        ckpt = Checkpoint.from_network(GmvNetwork(40, width=4), calibration_end=date(2100, 1, 1))
        strategy = Strategy('NN', schedule=CheckpointSchedule([ckpt]))
        with self.assertRaises(SimulationError):
            run_simulation(self.config(strategy='NN'), market.store, strategy)

    def test_short_history(self):
        store = make_store({'A': [10.0, 11.0, 12.0]})
        with self.assertRaises(DataValidationError):
            run_simulation(self.config(), store, Strategy('MLE'))


class ReferenceRatesTest(unittest.TestCase):

    def test_csv_lookup(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'rates.csv'
            path.write_text('date,rate\n2021-01-04,0.01\n2021-02-01,0.02\n', encoding='utf-8')
            rates = ReferenceRates.from_csv(path)
            self.assertEqual(rates.rate_at('2021-01-15'), 0.01)
            self.assertEqual(rates.rate_at('2021-02-01'), 0.02)
            with self.assertRaises(DataValidationError):
                rates.rate_at('2020-12-31')

    def test_missing_column(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'rates.csv'
            path.write_text('date,value\n2021-01-04,0.01\n', encoding='utf-8')
            with self.assertRaises(DataValidationError):
                ReferenceRates.from_csv(path)


class SimulateTaskTest(unittest.TestCase):

    def test_cash_task(self):
        result = simulate_task.apply(kwargs={
            'config': {'strategy': 'CASH', 'dt_in': 40},
            'synth': {'n_assets': 4, 'n_days': 60, 'n_factors': 1},
        }).get()
        self.assertEqual(result['status'], 'success')
        self.assertEqual(result['final_nlv'], 1_000_000.0)

    def test_invalid_config(self):
        result = simulate_task.apply(kwargs={'config': {'interval': 0}}).get()
        self.assertEqual(result['error_code'], 'VALIDATION_ERROR')
