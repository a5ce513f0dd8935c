"""단변량 가중 규칙 (ERB, MCW)"""
from typing import Optional, Sequence

import numpy as np

from config.exceptions import DataValidationError
from portfolio.assembly import PortfolioWeights, WeightConstraint


def _proportional(values: np.ndarray, assets: Optional[Sequence[str]], label: str) -> PortfolioWeights:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise DataValidationError(f"{label} 입력은 비어 있지 않은 1차원이어야 합니다")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise DataValidationError(f"{label} 입력은 양의 유한값이어야 합니다")
    return PortfolioWeights(values / values.sum(), WeightConstraint.LONG_ONLY, assets)


def erb_weights(variances, assets: Optional[Sequence[str]] = None) -> PortfolioWeights:
    """분산 역수 비례 가중 w_i ∝ 1/σ_i²"""
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0):
        raise DataValidationError("ERB 분산은 양수여야 합니다")
    return _proportional(1.0 / variances, assets, 'ERB')


def mcw_weights(market_caps, assets: Optional[Sequence[str]] = None) -> PortfolioWeights:
    """시가총액 비례 가중"""
    return _proportional(market_caps, assets, 'MCW')
