"""
무마찰 부트스트랩 백테스트

복제마다 시작일과 n개 자산 바스켓을 무작위로 뽑고, interval 거래일마다
직전 Δt_in 윈도우로 가중치를 다시 계산합니다. 결정 행 t의 종가에 체결하므로
보유 수익률과 손실 윈도우는 t + 1 행부터 시작합니다 (학습 표본과 같은 하루 간격).
보유 구간에는 가중치가 일간 수익률로 드리프트하며 비용과 정수 주식 제약은 없습니다.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError, LeakageError
from config.seeds import STREAM_BACKTEST, make_rng
from panel.models import ReturnPanel
from portfolio.assembly import gmv_loss
from .metrics import compute_metrics, max_drawdown_by_year
from .models import BacktestConfig, BacktestReport, ReplicationResult
from .strategies import Strategy

logger = logging.getLogger(__name__)


def start_range(panel: ReturnPanel, config: BacktestConfig) -> Tuple[int, int]:
    """시작 행 t0의 가능 범위 [lo, hi]"""
    lo, hi = 0, panel.n_days
    if config.span_start is not None:
        lo = int(panel.dates.searchsorted(pd.Timestamp(config.span_start), side='left'))
    if config.span_end is not None:
        hi = int(panel.dates.searchsorted(pd.Timestamp(config.span_end), side='right'))
    t_lo = max(lo, config.dt_in)
    t_hi = hi - config.horizon
    if t_hi < t_lo:
        raise DataValidationError(
            f"데이터 구간 부족: Δt_in {config.dt_in}일 + 보유 {config.horizon}일이 필요합니다 "
            f"(사용 가능 {hi - max(lo - config.dt_in, 0)}일)"
        )
    return t_lo, t_hi


def drift(weights: np.ndarray, returns: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    보유 구간 일간 복리

    Returns:
        (일간 포트폴리오 수익률, 구간 말 가중치)
    """
    w = weights.copy()
    daily = np.empty(returns.shape[0])
    for d, r in enumerate(returns):
        rp = float(w @ r)
        daily[d] = rp
        w = w * (1.0 + r) / (1.0 + rp)
    return daily, w


class ReplicationRunner:
    """복제 하나의 상태와 진행"""

    def __init__(self, panel: ReturnPanel, config: BacktestConfig, strategy: Strategy):
        self.panel = panel
        self.config = config
        self.strategy = strategy

    def eligible(self, t: int) -> np.ndarray:
        """추정 윈도우와 다음 보유 구간에 결측이 없는 자산"""
        stop = min(t + 1 + max(self.config.interval, self.config.dt_out), self.panel.n_days)
        return self.panel.complete_assets(t - self.config.dt_in, stop)

    def refresh_basket(self, basket: np.ndarray, t: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        """결측 자산을 새 무작위 자산으로 교체 (n 유지)"""
        eligible = self.eligible(t)
        keep = basket[np.isin(basket, eligible)]
        missing = basket.size - keep.size
        if missing == 0:
            return basket, 0
        pool = np.setdiff1d(eligible, keep)
        if pool.size < missing:
            raise DataValidationError(f"{self.panel.dates[t].date()}: 교체 가능한 자산이 부족합니다")
        fresh = rng.choice(pool, size=missing, replace=False)
        return np.sort(np.concatenate([keep, fresh])), missing

    def estimation_window(self, t: int, columns: np.ndarray) -> np.ndarray:
        """결정 행 t 직전 Δt_in 행 (t 행 자체는 포함하지 않음)"""
        start = t - self.config.dt_in
        if start < 0:
            raise LeakageError(f"결정 행 {t} 이전 데이터가 Δt_in={self.config.dt_in}보다 짧습니다")
        return self.panel.window(start, t, columns)

    def run(self, replication: int) -> ReplicationResult:
        config = self.config
        rng = make_rng(config.seed, STREAM_BACKTEST, replication)
        t_lo, t_hi = start_range(self.panel, config)
        t0 = int(rng.integers(t_lo, t_hi + 1))
        eligible = self.eligible(t0)
        if eligible.size < config.n:
            raise DataValidationError(f"{self.panel.dates[t0].date()}: 결측 없는 자산 {eligible.size}개 < n={config.n}")
        basket = np.sort(rng.choice(eligible, size=config.n, replace=False))

        daily_parts: List[np.ndarray] = []
        weights_history: List[pd.Series] = []
        losses: List[float] = []
        replaced = 0
        for k in range(config.rebalances):
            t = t0 + k * config.interval
            if k > 0:
                basket, swapped = self.refresh_basket(basket, t, rng)
                replaced += swapped
            assets = [self.panel.assets[i] for i in basket]
            window = self.estimation_window(t, basket)
            target = self.strategy.weights(window, assets, self.panel.dates[t])
            w = target.weights
            weights_history.append(pd.Series(w, index=assets))

            holding = self.panel.window(t + 1, t + 1 + config.interval, basket)
            oos = self.panel.window(t + 1, t + 1 + config.dt_out, basket)
            losses.append(gmv_loss(w, oos).item())
            daily, _ = drift(w, holding)
            daily_parts.append(daily)

        dates = self.panel.dates[t0 + 1:t0 + 1 + config.rebalances * config.interval]
        daily_returns = pd.Series(np.concatenate(daily_parts), index=dates)
        result = ReplicationResult(
            replication=replication,
            start_date=self.panel.dates[t0].date(),
            daily_returns=daily_returns,
            weights=weights_history,
            losses=losses,
            replaced=replaced,
        )
        result.metrics = compute_metrics(daily_returns, weights_history, losses)
        return result


def run_replications(panel: ReturnPanel, config: BacktestConfig, strategy: Strategy) -> List[ReplicationResult]:
    """복제 실행 (결과 순서는 복제 번호 순)"""
    runner = ReplicationRunner(panel, config, strategy)
    indices = range(config.replications)
    if config.threads <= 1:
        return [runner.run(k) for k in indices]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(runner.run, indices))


def summarize(config: BacktestConfig, results: List[ReplicationResult]) -> BacktestReport:
    rows = []
    yearly = []
    for res in results:
        row = {'replication': res.replication, 'start_date': res.start_date, 'replaced': res.replaced}
        row.update(res.metrics)
        rows.append(row)
        mdd = max_drawdown_by_year(res.daily_returns).rename('max_drawdown').reset_index()
        mdd.columns = ['year', 'max_drawdown']
        mdd.insert(0, 'replication', res.replication)
        yearly.append(mdd)
    return BacktestReport(
        strategy=config.strategy,
        constraint=config.constraint,
        replications=pd.DataFrame(rows),
        drawdown_by_year=pd.concat(yearly, ignore_index=True) if yearly else pd.DataFrame(),
        losses=np.array([res.metrics['loss'] for res in results]),
    )


def run_frictionless(panel: ReturnPanel, config: BacktestConfig, strategy: Strategy) -> BacktestReport:
    """
    무마찰 부트스트랩 백테스트

    Returns:
        BacktestReport (복제별 지표, 평균, 연도별 낙폭)
    """
    logger.info(
        f"백테스트 시작: 전략 {config.strategy} ({config.constraint.value}), n={config.n}, "
        f"{config.replications}회 × {config.rebalances}번 리밸런싱"
    )
    results = run_replications(panel, config, strategy)
    report = summarize(config, results)
    agg = report.aggregate
    logger.info(
        f"백테스트 완료: 손실 {agg['loss']:.6f}, 연변동성 {agg['ann_volatility']:.4f}, "
        f"샤프 {agg['sharpe']:.3f}, n_eff {agg['n_eff']:.1f}"
    )
    return report
