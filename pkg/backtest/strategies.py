"""
리밸런싱 시점 가중치 전략

모든 전략은 결정일 직전까지의 수익률 윈도우만 받습니다.
"""
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import ConfigError, DataValidationError
from estimators.dispatch import estimate_covariance
from estimators.models import AoTable, CleanConfig, CleanerTag
from estimators.univariate import erb_weights, mcw_weights
from panel.models import PanelStore
from portfolio.assembly import PortfolioWeights, WeightConstraint, gmv_weights
from portfolio.qp import gmv_weights_longonly
from training.schedule import CheckpointSchedule
from .models import NN_STRATEGY, BacktestConfig

logger = logging.getLogger(__name__)


def weights_from_precision(precision: np.ndarray, constraint: WeightConstraint,
                           assets: Optional[Sequence[str]] = None) -> PortfolioWeights:
    """역공분산 → 제약에 맞는 GMV 가중치"""
    if constraint == WeightConstraint.LONG_ONLY:
        return gmv_weights_longonly(np.linalg.inv(precision)).to_portfolio(assets)
    return PortfolioWeights(gmv_weights(precision).data.copy(), WeightConstraint.UNCONSTRAINED, assets)


def weights_from_covariance(cov: np.ndarray, constraint: WeightConstraint,
                            assets: Optional[Sequence[str]] = None) -> PortfolioWeights:
    if constraint == WeightConstraint.LONG_ONLY:
        return gmv_weights_longonly(cov).to_portfolio(assets)
    return PortfolioWeights(gmv_weights(np.linalg.inv(cov)).data.copy(), WeightConstraint.UNCONSTRAINED, assets)


@dataclass
class Strategy:
    """
    가중치 전략

    Args:
        name: 전략 태그
        constraint: 가중치 제약
        clean: 벤치마크 정제 설정
        schedule: NN 체크포인트 일정
        store: MCW 시가총액 원천
        ao_tables: AO 테이블
        reference: ORACLE 기준 상관행렬 (자산 ID → 행렬 위치는 호출자가 맞춤)
    """
    name: str
    constraint: WeightConstraint = WeightConstraint.UNCONSTRAINED
    clean: Optional[CleanConfig] = None
    schedule: Optional[CheckpointSchedule] = None
    store: Optional[PanelStore] = None
    ao_tables: Optional[Mapping[Tuple[int, int], AoTable]] = None
    reference: Optional[pd.DataFrame] = None

    def __post_init__(self):
        self.name = self.name.upper()
        if self.name == NN_STRATEGY and self.schedule is None:
            raise ConfigError("NN 전략에는 체크포인트가 필요합니다")
        if self.name == 'MCW' and self.store is None:
            raise ConfigError("MCW 전략에는 시가총액 레코드가 필요합니다")

    def weights(self, window: np.ndarray, assets: Sequence[str], decision_date) -> PortfolioWeights:
        """
        Args:
            window: 결정일 직전 Δt_in × n 수익률
            assets: 열 자산 ID
            decision_date: 결정일 (이 날의 데이터는 window에 없음)
        """
        if window.shape[1] == 1:
            return PortfolioWeights(np.ones(1), self.constraint, assets)
        if self.name == NN_STRATEGY:
            precision = self.schedule.precision(decision_date, window)
            return weights_from_precision(precision, self.constraint, assets)
        if self.name == 'ERB':
            return erb_weights(window.var(axis=0), assets)
        if self.name == 'MCW':
            return mcw_weights(self.previous_caps(assets, decision_date), assets)

        tag = CleanerTag(self.name)
        config = (self.clean or CleanConfig()).model_copy(update={'tag': tag})
        reference = None
        if tag == CleanerTag.ORACLE:
            if self.reference is None:
                raise ConfigError("ORACLE 전략에는 기준 상관행렬이 필요합니다")
            reference = self.reference.loc[list(assets), list(assets)].to_numpy()
        cov = estimate_covariance(window, config, ao_tables=self.ao_tables, reference=reference)
        return weights_from_covariance(cov, self.constraint, assets)

    def previous_caps(self, assets: Sequence[str], decision_date) -> np.ndarray:
        """결정일 전 거래일 종가 기준 시가총액"""
        caps = self.store.market_cap
        pos = caps.index.searchsorted(pd.Timestamp(decision_date), side='left') - 1
        if pos < 0:
            raise DataValidationError(f"{decision_date} 이전 시가총액이 없습니다")
        return caps.iloc[pos][list(assets)].to_numpy(dtype=float)


def build_strategy(config: BacktestConfig, clean: Optional[CleanConfig] = None,
                   store: Optional[PanelStore] = None, ao_tables=None, reference=None) -> Strategy:
    """
    설정의 strategy, checkpoints, constraint, dt_in으로 전략 구성

    SimulationConfig도 같은 필드를 가지므로 그대로 받습니다.
    """
    schedule = CheckpointSchedule.from_paths(config.checkpoints) if config.strategy == NN_STRATEGY else None
    if schedule is not None and schedule.dt_in != config.dt_in:
        raise ConfigError(f"체크포인트 Δt_in={schedule.dt_in}이 설정 dt_in={config.dt_in}과 다릅니다")
    return Strategy(
        name=config.strategy, constraint=config.constraint, clean=clean, schedule=schedule,
        store=store, ao_tables=ao_tables, reference=reference,
    )


def strategy_for_market(config: BacktestConfig, market, clean: Optional[CleanConfig] = None,
                        ao_tables=None) -> Strategy:
    """
    MarketData에 맞춘 전략 (합성 시장이면 ORACLE 기준으로 모집단 상관행렬을 씀)
    """
    reference = None
    if market.population is not None:
        std = np.sqrt(np.diag(market.population))
        corr = market.population / np.outer(std, std)
        reference = pd.DataFrame(corr, index=market.panel.assets, columns=market.panel.assets)
    return build_strategy(config, clean=clean, store=market.store, ao_tables=ao_tables, reference=reference)
