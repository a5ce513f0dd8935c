"""표본 공분산 GMV의 OOS 분산 팽창 몬테카를로"""
from typing import Dict, Optional
import logging

import numpy as np

from config.exceptions import ConfigError
from config.seeds import STREAM_EXPERIMENT, make_rng

logger = logging.getLogger(__name__)


def predicted_inflation(n: int, dt_in: int) -> float:
    """이론 팽창 계수 1 + q/(1 − q)"""
    q = n / dt_in
    if q >= 1:
        raise ConfigError(f"q = {q:.3f} ≥ 1에서는 팽창 계수가 정의되지 않습니다")
    return 1.0 + q / (1.0 - q)


def variance_inflation_mc(
    n: int,
    dt_in: int,
    dt_out: Optional[int] = None,
    trials: int = 2000,
    seed: int = 0,
    population: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    E[σ²_PTF] / σ²_★ 추정

    Args:
        n: 자산 수
        dt_in: 추정 윈도우 길이 (n + 2 초과)
        dt_out: OOS 실현 윈도우 (None이면 모집단 Σ로 평가)
        trials: 시행 수
        seed: 시드
        population: 모집단 공분산 (기본 단위행렬)

    Returns:
        mc_mean, mc_stderr, predicted, q
    """
    if dt_in <= n + 2:
        raise ConfigError(f"Δt_in({dt_in})은 n + 2({n + 2})보다 커야 합니다")
    cov = np.eye(n) if population is None else np.asarray(population, dtype=float)
    chol = np.linalg.cholesky(cov)
    ones = np.ones(n)
    optimal = 1.0 / float(ones @ np.linalg.solve(cov, ones))
    rng = make_rng(seed, STREAM_EXPERIMENT, n, dt_in)

    ratios = np.empty(trials)
    for k in range(trials):
        sample = rng.standard_normal((dt_in, n)) @ chol.T
        estimate = sample.T @ sample / dt_in
        x = np.linalg.solve(estimate, ones)
        w = x / x.sum()
        if dt_out is None:
            variance = float(w @ cov @ w)
        else:
            realized = rng.standard_normal((dt_out, n)) @ chol.T
            variance = float(np.mean((realized @ w) ** 2))
        ratios[k] = variance / optimal

    result = {
        'n': n,
        'dt_in': dt_in,
        'q': n / dt_in,
        'mc_mean': float(ratios.mean()),
        'mc_stderr': float(ratios.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float('nan'),
        'predicted': predicted_inflation(n, dt_in),
    }
    logger.info(f"분산 팽창 MC: n={n}, Δt_in={dt_in} → {result['mc_mean']:.4f} (이론 {result['predicted']:.4f})")
    return result
