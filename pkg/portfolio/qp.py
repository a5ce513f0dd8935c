"""
롱온리 최소분산 QP

min wᵀΣw  s.t.  1ᵀw = 1, w ≥ 0

비음 제약에 대한 primal active-set 방식입니다. 예산 제약은 자유 변수
집합 F 위에서 w_F = ν Σ_FF⁻¹ 1 로 소거합니다.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
import logging

import numpy as np

from config.exceptions import NumericalError, SolverError
from .assembly import PortfolioWeights, WeightConstraint

logger = logging.getLogger(__name__)

STEP_TOLERANCE = 1e-14
MULTIPLIER_TOLERANCE = 1e-12
JITTER_TRIGGER = 1e-12
JITTER_SCALE = 1e-10


@dataclass
class QpResult:
    """QP 해와 KKT 잔차"""
    weights: np.ndarray
    iterations: int
    active: np.ndarray
    kkt: Dict[str, float] = field(default_factory=dict)
    jitter: float = 0.0

    def to_portfolio(self, assets=None) -> PortfolioWeights:
        return PortfolioWeights(self.weights, WeightConstraint.LONG_ONLY, assets)


def regularize(cov: np.ndarray) -> Tuple[np.ndarray, float]:
    """최소 고유값이 trace/n 대비 너무 작으면 대각 jitter 추가"""
    cov = 0.5 * (cov + cov.T)
    n = cov.shape[0]
    scale = np.trace(cov) / n
    if scale <= 0:
        raise NumericalError("공분산 trace가 0 이하입니다")
    smallest = np.linalg.eigvalsh(cov)[0]
    if smallest < JITTER_TRIGGER * scale:
        jitter = JITTER_SCALE * scale
        logger.warning(f"QP 공분산 최소 고유값 {smallest:.3e} → 대각 jitter {jitter:.3e} 추가")
        return cov + jitter * np.eye(n), jitter
    return cov, 0.0


def kkt_residuals(cov: np.ndarray, w: np.ndarray, active: np.ndarray) -> Dict[str, float]:
    """정상성, 원시 실현 가능성, 상보 여유성, 쌍대 실현 가능성 잔차"""
    grad = cov @ w
    nu = float(w @ grad)
    z = grad - nu
    free = ~active
    return {
        'stationarity': float(np.max(np.abs(z[free]))) if free.any() else 0.0,
        'primal': float(max(0.0, -np.min(w), abs(np.sum(w) - 1.0))),
        'complementarity': float(np.max(np.abs(w * z))),
        'dual': float(max(0.0, -np.min(z[active]))) if active.any() else 0.0,
    }


def gmv_weights_longonly(cov: np.ndarray, max_iter: Optional[int] = None) -> QpResult:
    """
    롱온리 GMV 가중치

    Args:
        cov: 공분산 (대칭 PSD)
        max_iter: 최대 피벗 수 (기본 10·n²)

    Raises:
        SolverError: 반복 한도 내 미수렴
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    cov, jitter = regularize(cov)
    max_iter = max_iter or 10 * n * n

    w = np.full(n, 1.0 / n)
    active = np.zeros(n, dtype=bool)
    ones = np.ones(n)

    for iteration in range(1, max_iter + 1):
        free = np.flatnonzero(~active)
        try:
            x = np.linalg.solve(cov[np.ix_(free, free)], ones[free])
        except np.linalg.LinAlgError as e:
            raise SolverError(f"자유 변수 부분 행렬 풀이 실패: {e}")
        target = np.zeros(n)
        target[free] = x / x.sum()
        step = target - w

        if np.max(np.abs(step)) <= STEP_TOLERANCE:
            w = target
            grad = cov @ w
            nu = float(w @ grad)
            z = np.where(active, grad - nu, np.inf)
            worst = int(np.argmin(z))
            if z[worst] >= -MULTIPLIER_TOLERANCE * max(abs(nu), 1e-300):
                result = QpResult(w, iteration, active, kkt_residuals(cov, w, active), jitter)
                logger.debug(f"롱온리 QP 수렴: {iteration}회, 활성 제약 {int(active.sum())}개")
                return result
            active[worst] = False
            continue

        blocking = np.flatnonzero((step < 0) & ~active)
        alpha, hit = 1.0, -1
        if blocking.size:
            ratios = -w[blocking] / step[blocking]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha, hit = float(ratios[k]), int(blocking[k])
        w = w + alpha * step
        if hit >= 0:
            w[hit] = 0.0
            active[hit] = True
            w = np.maximum(w, 0.0)
            w = w / w.sum()

    raise SolverError(f"롱온리 QP가 {max_iter}회 피벗 안에 수렴하지 않았습니다")
