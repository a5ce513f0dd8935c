"""
GMV 네트워크

지연 변환 → 표본 상관 고유분해 → BiLSTM 역고유값 정제 → 변동성 MLP →
Σ⁻¹ 조립 → GMV 가중치. 전체가 하나의 미분 가능한 그래프입니다.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from autodiff import Tensor, as_tensor, div
from config.exceptions import CheckpointError, ShapeError
from config.seeds import STREAM_INIT, make_rng
from portfolio.assembly import (
    PortfolioWeights, PrecisionEstimate, WeightConstraint, assemble_precision,
    gmv_loss, gmv_weights, marginal_std, project_eigvecs, sample_correlation,
)
from .lag import LagTransform
from .lstm import BiLstmCleaner, param_count as lstm_param_count
from .vol_mlp import VolatilityMlp, mlp_param_count

logger = logging.getLogger(__name__)


@dataclass
class NetworkOutput:
    """순전파 중간값과 결과 (Tensor)"""
    transformed: Tensor
    sigma: Tensor
    correlation: Tensor
    sample_eigenvalues: Tensor
    sample_eigenvectors: Tensor
    inv_eigenvalues: Tensor
    eigenvectors: Tensor
    inv_vol: Tensor
    precision: Tensor
    weights: Tensor

    def estimate(self) -> PrecisionEstimate:
        return PrecisionEstimate(
            precision=self.precision.data.copy(),
            inv_vol=self.inv_vol.data.copy(),
            eigenvectors=self.eigenvectors.data.copy(),
            inv_eigenvalues=self.inv_eigenvalues.data.copy(),
        )


class GmvNetwork:
    """세 블록을 묶은 역공분산 추정 네트워크"""

    def __init__(self, dt_in: int, width: int = 64, seed: int = 0,
                 arrays: Optional[Dict[str, np.ndarray]] = None):
        self.dt_in = dt_in
        self.width = width
        if arrays is None:
            rng = make_rng(seed, STREAM_INIT)
            self.lag = LagTransform(dt_in)
            self.cleaner = BiLstmCleaner(width, rng=rng)
            self.vol = VolatilityMlp(rng=rng)
        else:
            missing = [k for k in self.param_names(width) if k not in arrays]
            if missing:
                raise CheckpointError(f"파라미터 누락: {missing}")
            self.lag = LagTransform(dt_in, alpha=arrays['lag.alpha'], beta_raw=arrays['lag.beta_raw'])
            self.cleaner = BiLstmCleaner(width, arrays=arrays)
            self.vol = VolatilityMlp(arrays=arrays)

    @staticmethod
    def param_names(width: int = 64) -> List[str]:
        """체크포인트 정규 순서"""
        return ['lag.alpha', 'lag.beta_raw'] + BiLstmCleaner.param_names(width) + VolatilityMlp.param_names()

    @staticmethod
    def expected_param_count(dt_in: int, width: int = 64) -> int:
        """8ω² + 26ω + 1 + 2,753 + 2Δt_in"""
        return lstm_param_count(width) + mlp_param_count() + 2 * dt_in

    @property
    def params(self) -> Dict[str, Tensor]:
        merged: Dict[str, Tensor] = {}
        merged.update(self.lag.params)
        merged.update(self.cleaner.params)
        merged.update(self.vol.params)
        return {name: merged[name] for name in self.param_names(self.width)}

    @property
    def n_params(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def arrays(self) -> Dict[str, np.ndarray]:
        """파라미터 배열 (Adam이 제자리 갱신하는 참조)"""
        return {name: p.data for name, p in self.params.items()}

    def copy_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise ShapeError(f"{name} shape {arrays[name].shape} ≠ {p.shape}")
            p.data[...] = arrays[name]

    def forward(self, window) -> NetworkOutput:
        """
        Args:
            window: Δt_in × n 원수익률 (시간순, 결측 없음)
        """
        r = as_tensor(window)
        if r.ndim != 2 or r.shape[0] != self.dt_in:
            raise ShapeError(f"입력 윈도우 shape {r.shape}: 행 수는 Δt_in={self.dt_in}이어야 합니다")
        n = r.shape[1]
        if n < 2:
            raise ShapeError("자산은 2개 이상이어야 합니다")

        transformed = self.lag(r)
        sigma = marginal_std(transformed)
        corr, spectrum = sample_correlation(transformed, sigma)
        inv_lam = self.cleaner(spectrum.eigenvalues, n / self.dt_in)
        lam = div(1.0, inv_lam)
        v_nn = project_eigvecs(spectrum.eigenvectors, lam)
        inv_vol = self.vol(sigma)
        precision = assemble_precision(inv_vol, v_nn, inv_lam)
        weights = gmv_weights(precision)
        return NetworkOutput(
            transformed=transformed, sigma=sigma, correlation=corr,
            sample_eigenvalues=spectrum.eigenvalues, sample_eigenvectors=spectrum.eigenvectors,
            inv_eigenvalues=inv_lam, eigenvectors=v_nn, inv_vol=inv_vol,
            precision=precision, weights=weights,
        )

    def loss(self, window, oos_returns) -> Tensor:
        """표본 하나의 학습 손실"""
        return gmv_loss(self.forward(window).weights, oos_returns)

    def predict(self, window, assets: Optional[Sequence[str]] = None) -> Tuple[PrecisionEstimate, PortfolioWeights]:
        """추론 (Tape 없이)"""
        out = self.forward(np.asarray(window, dtype=float))
        return out.estimate(), PortfolioWeights(out.weights.data.copy(), WeightConstraint.UNCONSTRAINED, assets)


def ensemble_precision(networks: Sequence[GmvNetwork], window) -> np.ndarray:
    """여러 모델의 역공분산 평균"""
    if not networks:
        raise ShapeError("모델이 하나 이상 필요합니다")
    total = None
    for net in networks:
        p = net.forward(np.asarray(window, dtype=float)).precision.data
        total = p.copy() if total is None else total + p
    return total / len(networks)
