"""
성과 지표

무마찰 백테스트와 브로커 시뮬레이터가 함께 씁니다.
연율화: 변동성 √252, 평균 수익률 252, 무위험 이자율 0.
"""
from typing import Dict, Optional, Sequence
import logging

import numpy as np
import pandas as pd

from config.exceptions import ShapeError
from config.seeds import STREAM_EXPERIMENT, make_rng

logger = logging.getLogger(__name__)

TRADING_DAYS = 252


def max_drawdown(returns) -> float:
    """누적 가치의 최대 고점 대비 하락률 (0 이상)"""
    values = np.cumprod(1.0 + np.asarray(returns, dtype=float))
    values = np.concatenate([[1.0], values])
    peaks = np.maximum.accumulate(values)
    return float(np.max(1.0 - values / peaks))


def max_drawdown_by_year(returns: pd.Series) -> pd.Series:
    """역년별 최대 낙폭"""
    if not isinstance(returns.index, pd.DatetimeIndex):
        raise ShapeError("연도별 낙폭에는 날짜 인덱스가 필요합니다")
    return returns.groupby(returns.index.year).apply(max_drawdown)


def turnover(weights: Sequence[pd.Series]) -> float:
    """리밸런싱당 ½Σ|w_new − w_old| 평균 (목표 가중치 기준, 드리프트 미반영)"""
    if len(weights) < 2:
        return 0.0
    changes = []
    for old, new in zip(weights[:-1], weights[1:]):
        aligned_old, aligned_new = old.align(new, fill_value=0.0)
        changes.append(0.5 * float(np.abs(aligned_new - aligned_old).sum()))
    return float(np.mean(changes))


def compute_metrics(daily_returns, weights: Sequence[pd.Series], losses: Optional[Sequence[float]] = None) -> Dict[str, float]:
    """
    일간 수익률과 리밸런싱 가중치 이력 → 지표

    Args:
        daily_returns: 포트폴리오 일간 수익률
        weights: 리밸런싱별 목표 가중치 (자산 ID 인덱스)
        losses: 리밸런싱별 학습 손실

    Returns:
        loss, ann_volatility, ann_return, sharpe, sortino, turnover, leverage, n_eff, max_drawdown
    """
    r = np.asarray(daily_returns, dtype=float)
    if r.size < 2:
        raise ShapeError(f"지표 계산에는 2일 이상이 필요합니다: {r.size}")
    vol = float(r.std() * np.sqrt(TRADING_DAYS))
    mean = float(r.mean() * TRADING_DAYS)
    downside = float(np.sqrt(np.mean(np.minimum(r, 0.0) ** 2)) * np.sqrt(TRADING_DAYS))
    arrays = [w.to_numpy(dtype=float) for w in weights]
    return {
        'loss': float(np.mean(losses)) if losses else float('nan'),
        'ann_volatility': vol,
        'ann_return': mean,
        'sharpe': mean / vol if vol > 0 else float('nan'),
        'sortino': mean / downside if downside > 0 else float('nan'),
        'turnover': turnover(weights),
        'leverage': float(np.mean([np.abs(w).sum() for w in arrays])) if arrays else float('nan'),
        'n_eff': float(np.mean([1.0 / np.sum(w ** 2) for w in arrays])) if arrays else float('nan'),
        'max_drawdown': max_drawdown(r),
    }


def paired_bootstrap(a, b, samples: int = 10000, seed: int = 0) -> Dict[str, float]:
    """
    복제별 손실 쌍 부트스트랩

    Returns:
        mean_diff (a − b 평균), p_value (a의 평균 손실이 b보다 작지 않을 부트스트랩 확률)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ShapeError(f"쌍 부트스트랩 입력 shape 오류: {a.shape}, {b.shape}")
    diff = a - b
    rng = make_rng(seed, STREAM_EXPERIMENT)
    idx = rng.integers(0, diff.size, size=(samples, diff.size))
    means = diff[idx].mean(axis=1)
    p_value = float((np.sum(means >= 0) + 1) / (samples + 1))
    return {'mean_diff': float(diff.mean()), 'p_value': p_value, 'samples': samples}
