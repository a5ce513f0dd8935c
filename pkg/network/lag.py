"""
지연별 수익률 변환

r̃ = (α_t / β_t) · tanh(252 · β_t · r)

윈도우 행은 시간순(가장 오래된 날이 첫 행)이고, 지연 인덱스 t = 1은
가장 최근 날(마지막 행)입니다. 파라미터 배열은 지연 순서로 저장합니다.
"""
from typing import Dict, Optional
import logging

import numpy as np

from autodiff import Tensor, as_tensor, parameter, softplus, softplus_array, tanh
from config.exceptions import ShapeError

logger = logging.getLogger(__name__)

ANNUALIZATION = 252.0
INITIAL_ALPHA = 1.0
INITIAL_BETA = 0.5


def inverse_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


class LagTransform:
    """학습 가능한 지연별 스케일·포화 변환"""

    def __init__(self, dt_in: int, alpha: Optional[np.ndarray] = None, beta_raw: Optional[np.ndarray] = None):
        if dt_in < 1:
            raise ShapeError(f"Δt_in은 1 이상이어야 합니다: {dt_in}")
        self.dt_in = dt_in
        alpha = np.full(dt_in, INITIAL_ALPHA) if alpha is None else alpha
        beta_raw = np.full(dt_in, inverse_softplus(INITIAL_BETA)) if beta_raw is None else beta_raw
        self.params: Dict[str, Tensor] = {
            'lag.alpha': parameter(alpha, name='lag.alpha'),
            'lag.beta_raw': parameter(beta_raw, name='lag.beta_raw'),
        }
        for name, p in self.params.items():
            if p.shape != (dt_in,):
                raise ShapeError(f"{name} 길이 {p.shape}가 Δt_in={dt_in}과 다릅니다")

    @property
    def alpha(self) -> np.ndarray:
        return self.params['lag.alpha'].data

    @property
    def beta(self) -> np.ndarray:
        return softplus_array(self.params['lag.beta_raw'].data)

    def __call__(self, window) -> Tensor:
        """
        Args:
            window: Δt_in × n 원수익률 (시간순)

        Returns:
            변환된 Δt_in × n 행렬
        """
        r = as_tensor(window)
        if r.ndim != 2 or r.shape[0] != self.dt_in:
            raise ShapeError(f"윈도우 길이 {r.shape}가 Δt_in={self.dt_in}과 다릅니다")
        # 지연 순서 → 행 순서
        alpha = self.params['lag.alpha'][::-1].reshape(self.dt_in, 1)
        beta = softplus(self.params['lag.beta_raw'][::-1]).reshape(self.dt_in, 1)
        return (alpha / beta) * tanh((ANNUALIZATION * beta) * r)

    def diagnostics(self) -> Dict[str, object]:
        """지연별 α, β와 α 누적 절반 지점"""
        alpha = self.alpha
        half_lag = half_mass_lag(alpha)
        return {
            'lag': np.arange(1, self.dt_in + 1),
            'alpha': alpha.copy(),
            'beta': self.beta,
            'half_mass_lag': half_lag,
            'half_mass_fraction': half_lag / self.dt_in,
        }


def half_mass_lag(alpha: np.ndarray) -> int:
    """Σ_{t≤L} α_t ≥ ½ Σ α_t 를 만족하는 최소 L"""
    cumulative = np.cumsum(np.asarray(alpha, dtype=float))
    return int(np.argmax(cumulative >= 0.5 * cumulative[-1])) + 1
