"""
투자 유니버스 필터

결정일 date에 대해 date-1까지의 레코드만 사용합니다.
예외는 상장폐지 예고 규칙에 따른 Δt_out 선행 제외 하나뿐입니다.
"""
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError
from .models import FilterConfig, PanelStore, UniverseSelection

logger = logging.getLogger(__name__)

MIN_ASSETS_FOR_QUARTILES = 4


def low_variance_outlier_mask(log_vols: Sequence[np.ndarray], multiplier: float = 1.5) -> Tuple[np.ndarray, bool]:
    """
    저분산 이상치 판정

    Args:
        log_vols: 윈도우별 로그 표준편차 배열 목록 (보통 5일, 20일)
        multiplier: IQR 배수

    Returns:
        (제외 마스크, 퇴화 윈도우 경고 여부)
        모든 윈도우에서 Q1 - k·IQR 아래인 자산만 제외됩니다.
    """
    arrays = [np.asarray(v, dtype=float) for v in log_vols]
    if not arrays:
        raise DataValidationError("윈도우가 하나 이상 필요합니다")
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise DataValidationError("윈도우별 배열 길이가 다릅니다")
    if n < MIN_ASSETS_FOR_QUARTILES:
        raise DataValidationError(f"사분위 계산에는 자산이 {MIN_ASSETS_FOR_QUARTILES}개 이상 필요합니다: {n}")

    mask = np.ones(n, dtype=bool)
    degenerate = False
    for values in arrays:
        finite = values[np.isfinite(values)]
        if finite.size < MIN_ASSETS_FOR_QUARTILES:
            # 전 자산 분산 0 (로그 -inf) 등
            degenerate = True
            continue
        q1, q3 = np.percentile(finite, [25, 75], method='linear')
        fence = q1 - multiplier * (q3 - q1)
        mask &= values < fence

    if degenerate:
        logger.warning("퇴화 윈도우(분산 0)가 있어 저분산 제외를 적용하지 않습니다")
        return np.zeros(n, dtype=bool), True
    return mask, False


def _log_vols(returns: pd.DataFrame, windows: Sequence[int]) -> List[np.ndarray]:
    out = []
    for w in windows:
        block = returns.iloc[-w:]
        with np.errstate(divide='ignore'):
            out.append(np.log(block.std(ddof=1).to_numpy()))
    return out


def _auction_ok(auction: pd.DataFrame, window: int, min_fraction: float) -> pd.Series:
    """모든 롤링 윈도우에서 단일가 참여율 ≥ min_fraction"""
    window = min(window, len(auction))
    rolling = auction.rolling(window, min_periods=window).mean().iloc[window - 1:]
    return (rolling >= min_fraction - 1e-12).all(axis=0)


def filter_universe(
    store: PanelStore,
    date,
    n_target: int,
    config: Optional[FilterConfig] = None,
    candidates: Optional[Sequence[str]] = None,
) -> UniverseSelection:
    """
    유니버스 선택

    Args:
        store: 자산-일 레코드 저장소
        date: 결정일 (거래일)
        n_target: 목표 자산 수
        config: 필터 임계값
        candidates: 후보 자산 제한 (None이면 전체)

    Returns:
        시가총액 내림차순 자산 목록과 부족 플래그
    """
    config = config or FilterConfig()
    pos = store.date_position(date)
    prev = pos - 1
    h = config.history_days
    if prev - h + 1 < 0:
        raise DataValidationError(f"이력 부족: 결정일 이전 {prev + 1}일 < {h}일")

    past = slice(prev - h + 1, prev + 1)
    close = store.close.iloc[past]
    assets = list(store.assets) if candidates is None else [a for a in store.assets if a in set(candidates)]
    excluded: Dict[str, int] = {}

    def keep(mask: pd.Series, reason: str) -> None:
        nonlocal assets
        survivors = [a for a in assets if bool(mask.get(a, False))]
        excluded[reason] = len(assets) - len(survivors)
        assets = survivors

    # 1. 이력 전체 구간 상장 + 롤링 단일가 참여율
    keep(close.notna().iloc[0] & close.notna().iloc[-1], 'history')
    auction = store.wide('auction_flag').iloc[past].fillna(0.0)
    keep(_auction_ok(auction, config.auction_window, config.auction_min_fraction), 'auction')

    # 2. 최근 윈도우 유동성
    recent = slice(prev - config.recent_days + 1, prev + 1)
    r_close = store.close.iloc[recent]
    r_volume = store.wide('volume').iloc[recent]
    r_shares = store.wide('shares_outstanding').iloc[recent]
    r_auction = store.wide('auction_flag').iloc[recent]
    liquid = (
        (r_auction == 1.0).all(axis=0)
        & (r_volume >= config.min_volume_fraction * r_shares).all(axis=0)
        & (r_volume * r_close >= config.min_volume_fraction * r_close * r_shares).all(axis=0)
    )
    keep(liquid, 'liquidity')

    # 3. 발행주식 수와 가격대
    keep(store.wide('shares_outstanding').iloc[prev] > config.min_shares_outstanding, 'shares')
    keep(((r_close >= config.min_price) & (r_close <= config.max_price)).all(axis=0), 'price')

    # 4. 상장폐지 예고 (선행 구간)
    ahead = store.wide('delist_flag').iloc[pos:pos + config.delist_lookahead]
    keep(~(ahead.fillna(0.0) > 0).any(axis=0), 'delisting')

    # 5. 저분산 이상치 (전체 단면 기준)
    returns = store.adjusted_close.iloc[:prev + 1].pct_change(fill_method=None).iloc[1:]
    longest = max(config.vol_windows)
    listed = returns.iloc[-longest:].notna().all(axis=0)
    cross = returns.loc[:, listed]
    degenerate = False
    if cross.shape[1] >= MIN_ASSETS_FOR_QUARTILES:
        mask, degenerate = low_variance_outlier_mask(_log_vols(cross, config.vol_windows), config.iqr_multiplier)
        keep(pd.Series(~mask, index=cross.columns), 'low_variance')

    cap = store.market_cap.iloc[prev]

    def by_cap(names: List[str]) -> List[str]:
        return sorted(names, key=lambda a: (-float(cap[a]), a))

    # 6. 발행사당 한 종류
    if config.one_class_per_issuer:
        issuers = store.issuers()
        seen, survivors = set(), []
        for a in by_cap(assets):
            if issuers.get(a, a) not in seen:
                seen.add(issuers.get(a, a))
                survivors.append(a)
        excluded['issuer'] = len(assets) - len(survivors)
        assets = survivors

    # 7. 고상관 중복 제거 (시가총액 큰 쪽 유지)
    ordered = by_cap(assets)
    if len(ordered) > 1:
        corr = returns.iloc[-max(h - 1, 2):][ordered].corr().to_numpy()
        kept: List[int] = []
        for i in range(len(ordered)):
            if all(not (corr[i, j] > config.max_correlation) for j in kept):
                kept.append(i)
        excluded['correlation'] = len(ordered) - len(kept)
        ordered = [ordered[i] for i in kept]

    # 8. 시가총액 상위 n
    selected = ordered[:n_target]
    shortfall = len(selected) < n_target
    if shortfall:
        logger.warning(f"유니버스 부족: {date} 생존 {len(selected)} < 목표 {n_target}")
    logger.info(f"유니버스 필터 {pd.Timestamp(date).date()}: {len(selected)}자산 선택, 제외 {excluded}")
    return UniverseSelection(assets=selected, shortfall=shortfall, excluded=excluded,
                             degenerate_volatility=degenerate)
