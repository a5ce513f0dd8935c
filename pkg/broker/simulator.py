"""
현실적 계좌 시뮬레이션

시작 현금으로 계좌를 열고 거래일마다 이자·기업행위를 반영한 뒤,
interval 거래일마다 시가총액 상위 n개 자산으로 전략 가중치를 받아
정수 주식으로 종가 체결합니다.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union
import logging

import numpy as np
import pandas as pd

from backtest.metrics import TRADING_DAYS, compute_metrics, max_drawdown_by_year
from backtest.models import BacktestReport
from backtest.reports import write_workbook
from backtest.strategies import Strategy
from config.exceptions import DataValidationError, GmvError, SimulationError
from panel.models import FilterConfig, PanelStore, ReturnPanel
from panel.universe import filter_universe
from .account import accrue_daily, liquidate_delisted, rebalance
from .models import AccountState, DayFlows, FeeSchedule, SimulationConfig, Trade, from_micro, to_micro
from .rates import ReferenceRates

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = [
    'nlv', 'cash', 'positions_value', 'fees_commission', 'fees_notional', 'fees_sec',
    'interest', 'dividends', 'trade_cash', 'margin_excess',
]
FLOW_COLUMNS = {
    'fees_commission': 'commission', 'fees_notional': 'notional', 'fees_sec': 'sec',
    'interest': 'interest', 'dividends': 'dividends', 'trade_cash': 'trades',
}


def merge_flows(*parts: DayFlows) -> DayFlows:
    total = DayFlows()
    for part in parts:
        for name in FLOW_COLUMNS.values():
            setattr(total, name, getattr(total, name) + getattr(part, name))
    return total


@dataclass
class SimulationResult:
    """
    시뮬레이션 결과

    ledger의 금액 열은 정수 마이크로 단위입니다.
    """
    ledger: pd.DataFrame
    trades: pd.DataFrame
    opening_nlv: int = 0
    weights: List[pd.Series] = field(default_factory=list)
    report: Optional[BacktestReport] = None
    rolling_days: int = TRADING_DAYS

    @property
    def nlv(self) -> pd.Series:
        return self.ledger['nlv'].map(from_micro)

    @property
    def daily_returns(self) -> pd.Series:
        return self.nlv.pct_change().iloc[1:]

    def rolling_volatility(self) -> pd.Series:
        """1년 롤링 연율 변동성"""
        return self.daily_returns.rolling(self.rolling_days).std(ddof=0) * np.sqrt(TRADING_DAYS)

    def costs(self) -> Dict[str, int]:
        """
        항목별 합계 (마이크로 단위)

        계좌는 현금만으로 시작하므로 trading_pnl = Σ 매매 현금 흐름 + 마지막 평가액이며
        NLV_T − NLV_0 = trading_pnl + dividends − fees − interest가 정확히 성립합니다.
        """
        totals = {col: int(self.ledger[col].sum()) for col in FLOW_COLUMNS}
        last = self.ledger.iloc[-1]
        totals['trading_pnl'] = totals['trade_cash'] + int(last['positions_value'])
        totals['nlv_change'] = int(last['nlv']) - self.opening_nlv
        return totals

    def currency_ledger(self) -> pd.DataFrame:
        frame = self.ledger[LEDGER_COLUMNS].map(from_micro)
        frame.index.name = 'date'
        return frame


class Simulator:
    """계좌 상태 기계 (단일 스레드, 순차 진행)"""

    def __init__(self, config: SimulationConfig, store: PanelStore, strategy: Optional[Strategy],
                 fees: Optional[FeeSchedule] = None, rates: Optional[ReferenceRates] = None,
                 filter_config: Optional[FilterConfig] = None):
        self.config = config
        self.store = store
        self.strategy = strategy
        self.fees = fees or FeeSchedule()
        if rates is None:
            rates = ReferenceRates.from_csv(config.rate_csv) if config.rate_csv \
                else ReferenceRates(constant=config.reference_rate)
        self.rates = rates
        self.filter_config = filter_config
        self.panel: ReturnPanel = store.return_panel()
        self.closes = store.close.ffill()

    def day_range(self) -> range:
        """시뮬레이션 거래일 위치 [first, last]"""
        first = self.config.dt_in + 1 if self.strategy is not None else 0
        if self.config.start is not None:
            first = max(first, int(self.store.dates.searchsorted(pd.Timestamp(self.config.start), side='left')))
        last = len(self.store.dates) - 1
        if self.config.end is not None:
            last = int(self.store.dates.searchsorted(pd.Timestamp(self.config.end), side='right')) - 1
        if last < first:
            raise DataValidationError(
                f"시뮬레이션 구간 부족: Δt_in {self.config.dt_in}일 이력 뒤 거래일이 없습니다"
            )
        return range(first, last + 1)

    def select_assets(self, pos: int) -> List[str]:
        """결정일 pos의 투자 대상 (결측 없는 Δt_in 윈도우 + 전일 시가총액 상위 n)"""
        row = pos - 1
        complete = self.panel.complete_assets(row - self.config.dt_in, row)
        closes_today = self.store.close.iloc[pos]
        candidates = [self.panel.assets[i] for i in complete if pd.notna(closes_today.get(self.panel.assets[i]))]
        when = self.store.dates[pos]
        if self.config.use_universe_filter:
            return filter_universe(self.store, when, self.config.n, self.filter_config, candidates).assets
        caps = self.store.market_cap.iloc[pos - 1].reindex(candidates).dropna()
        ranked = caps.sort_values(ascending=False, kind='mergesort')
        return sorted(ranked.index[:self.config.n].tolist())

    def decide(self, pos: int) -> pd.Series:
        """전략 가중치 (자산 ID 인덱스)"""
        when = self.store.dates[pos]
        try:
            assets = self.select_assets(pos)
            if not assets:
                raise SimulationError(f"{when.date()}: 투자 가능한 자산이 없습니다")
            row = pos - 1
            window = self.panel.window(row - self.config.dt_in, row, self.panel.asset_index(assets))
            target = self.strategy.weights(window, assets, when)
        except SimulationError:
            raise
        except GmvError as e:
            raise SimulationError(
                f"{when.date()} 전략 계산 실패: {e.message}",
                details={'date': str(when.date()), 'error_code': e.error_code, 'cause': e.details},
            )
        return pd.Series(target.weights, index=assets)

    def run(self) -> SimulationResult:
        days = self.day_range()
        state = AccountState.opening(self.store.dates[days[0]].date(), self.config.initial_cash)
        rows = []
        trades: List[Trade] = []
        weights: List[pd.Series] = []
        logger.info(
            f"시뮬레이션 시작: {self.store.dates[days[0]].date()} ~ {self.store.dates[days[-1]].date()}, "
            f"전략 {self.config.strategy}, 시작 현금 {self.config.initial_cash:,.0f}"
        )

        for k, pos in enumerate(days):
            when = self.store.dates[pos]
            parts = [accrue_daily(state, when, self.store, self.fees, self.rates)]
            if self.strategy is not None and k % self.config.interval == 0:
                target = self.decide(pos)
                weights.append(target)
                flows, executed = rebalance(state, target.to_dict(), when, self.store, self.fees)
                parts.append(flows)
                trades.extend(executed)
            flows, executed = liquidate_delisted(state, when, self.store, self.fees)
            parts.append(flows)
            trades.extend(executed)

            day = merge_flows(*parts)
            closes = self.closes.iloc[pos]
            prices = {a: float(closes[a]) for a in state.held()}
            positions_value = state.positions_value(prices)
            row = {'date': when, 'cash': state.cash, 'positions_value': positions_value,
                   'nlv': state.cash + positions_value,
                   'margin_excess': state.cash + positions_value - state.short_value(prices)}
            row.update({col: getattr(day, attr) for col, attr in FLOW_COLUMNS.items()})
            rows.append(row)
            if k and k % 250 == 0:
                logger.info(f"시뮬레이션 진행: {when.date()} NLV {from_micro(row['nlv']):,.2f}")

        ledger = pd.DataFrame(rows).set_index('date')
        trade_frame = pd.DataFrame([vars(t) for t in trades]) if trades else pd.DataFrame(
            columns=['date', 'asset_id', 'shares', 'price', 'notional', 'commission', 'notional_fee', 'sec_fee', 'reason'])
        result = SimulationResult(
            ledger=ledger, trades=trade_frame, opening_nlv=to_micro(self.config.initial_cash),
            weights=weights, rolling_days=self.config.rolling_days,
        )
        result.report = self.build_report(result)
        logger.info(
            f"시뮬레이션 완료: NLV {from_micro(int(ledger['nlv'].iloc[-1])):,.2f}, 체결 {len(trades)}건"
        )
        return result

    def build_report(self, result: SimulationResult) -> Optional[BacktestReport]:
        returns = result.daily_returns
        if len(returns) < 2:
            return None
        metrics = compute_metrics(returns, result.weights)
        row = {'replication': 0, 'start_date': result.ledger.index[0].date(), 'replaced': 0}
        row.update(metrics)
        drawdown = max_drawdown_by_year(returns).rename('max_drawdown').reset_index()
        drawdown.columns = ['year', 'max_drawdown']
        return BacktestReport(
            strategy=self.config.strategy,
            constraint=self.config.constraint,
            replications=pd.DataFrame([row]),
            drawdown_by_year=drawdown,
            losses=np.array([metrics['loss']]),
        )


def run_simulation(config: SimulationConfig, store: PanelStore, strategy: Optional[Strategy],
                   fees: Optional[FeeSchedule] = None, rates: Optional[ReferenceRates] = None,
                   filter_config: Optional[FilterConfig] = None) -> SimulationResult:
    """
    일간 계좌 시뮬레이션

    Args:
        strategy: None이면 현금만 보유 (체결 없음)
    """
    return Simulator(config, store, strategy, fees, rates, filter_config).run()


def write_simulation_report(result: SimulationResult, output_dir: Union[str, Path], xlsx: bool = False) -> List[Path]:
    """
    - simulation_ledger.csv: 일간 원장 (통화 단위)
    - simulation_trades.csv: 체결 기록
    - simulation_risk.csv: 일간 NLV 수익률과 1년 롤링 변동성
    - simulation_metrics.csv / simulation_drawdown.csv: 지표와 연도별 낙폭
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ledger = result.currency_ledger()
    trades = result.trades.copy()
    for col in ('notional', 'commission', 'notional_fee', 'sec_fee'):
        if col in trades:
            trades[col] = trades[col].map(from_micro)
    risk = pd.DataFrame({'nlv_return': result.daily_returns, 'rolling_volatility': result.rolling_volatility()})
    risk.index.name = 'date'

    paths = [output_dir / name for name in (
        'simulation_ledger.csv', 'simulation_trades.csv', 'simulation_risk.csv',
    )]
    ledger.to_csv(paths[0], float_format='%.6f')
    trades.to_csv(paths[1], index=False)
    risk.to_csv(paths[2])
    sheets = {'원장': ledger, '체결': trades, '위험': risk}
    if result.report is not None:
        metrics_path = output_dir / 'simulation_metrics.csv'
        drawdown_path = output_dir / 'simulation_drawdown.csv'
        result.report.replications.to_csv(metrics_path, index=False)
        result.report.drawdown_by_year.to_csv(drawdown_path, index=False)
        paths += [metrics_path, drawdown_path]
        sheets.update({'지표': result.report.replications, '연도별 낙폭': result.report.drawdown_by_year})
    if xlsx:
        paths.append(write_workbook(output_dir / 'simulation.xlsx', sheets))
    logger.info(f"시뮬레이션 리포트 저장: {output_dir} ({len(paths)}개 파일)")
    return paths
