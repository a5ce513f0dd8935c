"""
합성 팩터 시장 생성기

r = B f + ε 형태의 팩터 모델로 수익률을 만들고,
모집단 공분산 B Bᵀ + Diag(σ_ε²)를 함께 반환합니다.
"""
from dataclasses import dataclass
from typing import Tuple
import logging

import numpy as np
import pandas as pd

from config.seeds import STREAM_SYNTH, make_rng
from .models import InnovationLaw, PanelStore, ReturnPanel, SyntheticMarketSpec

logger = logging.getLogger(__name__)

TRADING_DAYS = 252

# 원천 레코드 생성 상수
INITIAL_PRICE_RANGE = (20.0, 200.0)
SHARES_RANGE = (2e7, 5e8)
DAILY_TURNOVER_RANGE = (0.02, 0.05)
OPEN_GAP_STD = 0.002
SPLIT_RATIOS = (2.0, 3.0)

# 생성 수익률의 안전 범위 (|r| < 1 보장)
RETURN_CLIP = 0.95


@dataclass
class FactorModel:
    """팩터 모델 파라미터"""
    loadings: np.ndarray
    idio_vol: np.ndarray

    @property
    def population_cov(self) -> np.ndarray:
        return self.loadings @ self.loadings.T + np.diag(self.idio_vol ** 2)


def _unit_innovations(rng: np.random.Generator, spec: SyntheticMarketSpec, shape) -> np.ndarray:
    """분산 1로 정규화한 혁신항"""
    if spec.innovation == InnovationLaw.STUDENT_T:
        return rng.standard_t(spec.nu, size=shape) * np.sqrt((spec.nu - 2.0) / spec.nu)
    return rng.standard_normal(shape)


def build_factor_model(spec: SyntheticMarketSpec, rng: np.random.Generator) -> FactorModel:
    """적재 행렬과 일간 고유 변동성"""
    n, k = spec.n_assets, spec.n_factors
    loadings = np.zeros((n, k))
    if k > 0:
        # 첫 열은 양의 시장 팩터
        loadings[:, 0] = spec.loading_scale * np.abs(1.0 + 0.25 * rng.standard_normal(n))
        if k > 1:
            loadings[:, 1:] = spec.loading_scale * 0.5 * rng.standard_normal((n, k - 1))
    annual = rng.uniform(spec.idio_vol_min, spec.idio_vol_max, size=n)
    return FactorModel(loadings=loadings, idio_vol=annual / np.sqrt(TRADING_DAYS))


def trading_dates(spec: SyntheticMarketSpec, periods: int) -> pd.DatetimeIndex:
    return pd.bdate_range(start=pd.Timestamp(spec.start_date), periods=periods)


def generate_synthetic(spec: SyntheticMarketSpec) -> Tuple[ReturnPanel, np.ndarray]:
    """
    합성 수익률 패널 생성

    Returns:
        (수익률 패널, 모집단 공분산 n × n)
    """
    rng = make_rng(spec.seed, STREAM_SYNTH)
    model = build_factor_model(spec, rng)
    n, T, k = spec.n_assets, spec.n_days, spec.n_factors

    factors = _unit_innovations(rng, spec, (T, k))
    noise = _unit_innovations(rng, spec, (T, n)) * model.idio_vol
    returns = factors @ model.loadings.T + noise
    clipped = np.abs(returns) > RETURN_CLIP
    if clipped.any():
        logger.warning(f"합성 수익률 {int(clipped.sum())}건을 ±{RETURN_CLIP}로 절단했습니다")
        returns = np.clip(returns, -RETURN_CLIP, RETURN_CLIP)

    # 첫 날은 가격 기준일이므로 수익률 날짜는 두 번째 거래일부터
    dates = trading_dates(spec, T + 1)[1:]
    assets = [f"A{i:04d}" for i in range(n)]
    panel = ReturnPanel(dates=dates, assets=assets, returns=returns)
    logger.info(f"합성 패널 생성: {T}일 × {n}자산, 팩터 {k}개, 분포 {spec.innovation.value}")
    return panel, model.population_cov


def build_synthetic_store(spec: SyntheticMarketSpec, panel: ReturnPanel) -> PanelStore:
    """
    합성 수익률로 원천 레코드(가격·거래량·발행주식·기업행위) 생성

    조정 종가 A_t = P_0 Π(1 + r)를 유지하면서 분할·배당이 있는 날에
    원시 종가와 누적 조정 계수를 나눠 기록합니다.
    """
    rng = make_rng(spec.seed, STREAM_SYNTH, 1)
    n, T = panel.n_assets, panel.n_days
    all_dates = trading_dates(spec, T + 1)

    p0 = rng.uniform(*INITIAL_PRICE_RANGE, size=n)
    shares0 = rng.uniform(*SHARES_RANGE, size=n)
    split_event = rng.random((T + 1, n)) < spec.split_rate
    split_choice = rng.choice(SPLIT_RATIOS, size=(T + 1, n))
    dividend_event = rng.random((T + 1, n)) < spec.dividend_rate
    turnover = rng.uniform(*DAILY_TURNOVER_RANGE, size=(T + 1, n))
    gaps = OPEN_GAP_STD * rng.standard_normal((T + 1, n))
    open_missing = rng.random((T + 1, n)) < spec.missing_open_rate
    delisted = rng.random(n) < spec.delist_rate
    delist_day = np.where(delisted, rng.integers(T // 2, T + 1, size=n), T + 1)
    split_event[0] = False
    dividend_event[0] = False

    rows = []
    for j, asset in enumerate(panel.assets):
        close, factor, shares = p0[j], 1.0, shares0[j]
        for t in range(min(delist_day[j] + 1, T + 1)):
            split, dividend = 1.0, 0.0
            prev_close = close
            if t > 0:
                r = panel.returns[t - 1, j]
                if split_event[t, j]:
                    split = float(split_choice[t, j])
                    shares *= split
                    prev_close = prev_close / split
                if dividend_event[t, j] and r > spec.dividend_yield - 1.0:
                    dividend = spec.dividend_yield * prev_close
                close = (1.0 + r) * prev_close - dividend
                factor *= split * (1.0 + dividend / close)
            open_price = np.nan if open_missing[t, j] else prev_close * (1.0 + gaps[t, j])
            rows.append((
                all_dates[t], asset, open_price, close, factor,
                float(np.floor(shares * turnover[t, j])), shares, dividend, split,
                1.0, 1.0 if t == delist_day[j] else 0.0,
            ))

    frame = pd.DataFrame(rows, columns=[
        'date', 'asset_id', 'open', 'close', 'adj_factor', 'volume',
        'shares_outstanding', 'dividend_cash', 'split_ratio', 'auction_flag', 'delist_flag',
    ])
    logger.info(f"합성 레코드 생성: {len(frame)}건 (분할 {int(split_event.sum())}, 상장폐지 {int(delisted.sum())})")
    return PanelStore(frame)
