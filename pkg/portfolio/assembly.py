"""
역공분산 조립과 GMV 가중치

세 블록(지연 변환, 고유값 정제, 변동성 MLP)의 출력을
Σ⁻¹ = D⁻¹ V Λ⁻¹ Vᵀ D⁻¹ 로 조립하고 w = Σ⁻¹1 / 1ᵀΣ⁻¹1 을 계산합니다.
모든 함수는 Tensor를 받아 Tensor를 돌려주므로 학습 중 미분 가능합니다.
"""
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

from autodiff import Tensor, as_tensor, eigh_sym, sqrt, square, tsum
from config.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

ZERO_VARIANCE_TOLERANCE = 1e-14


class WeightConstraint(str, Enum):
    """가중치 제약"""
    UNCONSTRAINED = "unconstrained"
    LONG_ONLY = "long-only"


@dataclass
class SpectralDecomp:
    """상관행렬 스펙트럼 (고유값 오름차순)"""
    eigenvalues: Tensor
    eigenvectors: Tensor


@dataclass
class PrecisionEstimate:
    """역공분산 추정치와 구성 인자"""
    precision: np.ndarray
    inv_vol: np.ndarray
    eigenvectors: np.ndarray
    inv_eigenvalues: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.precision.shape[0]

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    def implied_correlation(self) -> np.ndarray:
        """정제 상관행렬 V Λ Vᵀ (단위 대각)"""
        return (self.eigenvectors / self.inv_eigenvalues) @ self.eigenvectors.T


@dataclass
class PortfolioWeights:
    """포트폴리오 가중치 (합 1)"""
    weights: np.ndarray
    constraint: WeightConstraint = WeightConstraint.UNCONSTRAINED
    assets: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)):
            raise NumericalError("가중치에 비유한 값이 있습니다")

    @property
    def n_eff(self) -> float:
        """유효 보유 종목 수 1/Σw²"""
        return float(1.0 / np.sum(self.weights ** 2))

    @property
    def leverage(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def to_csv(self, path: Union[str, Path]) -> None:
        assets = list(self.assets) if self.assets is not None else [f"A{i:04d}" for i in range(len(self.weights))]
        frame = pd.DataFrame({'asset_id': assets, 'weight': self.weights})
        frame.to_csv(path, index=False, float_format='%.12g')


def marginal_std(transformed) -> Tensor:
    """
    자산별 표준편차 σ̃ = sqrt(mean(r̃²) − mean(r̃)²) (모집단 분산)

    Raises:
        NumericalError: 분산 0인 열
    """
    r = as_tensor(transformed)
    if r.ndim != 2 or r.shape[0] < 2:
        raise ShapeError(f"윈도우 길이는 2 이상이어야 합니다: {r.shape}")
    variance = square(r).mean(axis=0) - square(r.mean(axis=0))
    second = np.mean(r.data ** 2, axis=0)
    flat = variance.data <= ZERO_VARIANCE_TOLERANCE * np.maximum(second, np.finfo(float).tiny)
    if np.any(flat):
        raise NumericalError(
            f"분산 0인 자산 열이 있습니다: {np.flatnonzero(flat).tolist()}",
            details={'columns': np.flatnonzero(flat).tolist()},
        )
    return sqrt(variance)


def sample_correlation(transformed, sigma=None) -> Tuple[Tensor, SpectralDecomp]:
    """
    표준화 상관행렬 C̃ = Z̃ᵀZ̃ / Δt 와 그 고유값 분해

    대각 성분은 정확히 1로 고정됩니다.
    """
    r = as_tensor(transformed)
    sigma = marginal_std(r) if sigma is None else as_tensor(sigma)
    n_days, n = r.shape
    z = (r - r.mean(axis=0, keepdims=True)) / sigma.reshape(1, n)
    corr = (z.T @ z) * (1.0 / n_days)
    off = 1.0 - np.eye(n)
    corr = corr * off + np.eye(n)
    values, vectors = eigh_sym(corr)
    return corr, SpectralDecomp(eigenvalues=values, eigenvectors=vectors)


def project_eigvecs(vectors, eigenvalues) -> Tensor:
    """
    V_NN = Diag(diag(Ṽ Λ Ṽᵀ))^(-1/2) Ṽ

    V_NN Λ V_NNᵀ 의 대각이 1이 되도록 행을 재조정합니다.
    """
    v = as_tensor(vectors)
    lam = as_tensor(eigenvalues)
    if np.any(lam.data <= 0):
        raise NumericalError("고유값은 양수여야 합니다")
    diagonal = square(v) @ lam
    if np.any(diagonal.data <= 0):
        raise NumericalError("Ṽ Λ Ṽᵀ 대각에 0이 있습니다")
    return v / sqrt(diagonal).reshape(-1, 1)


def assemble_precision(inv_vol, vectors, inv_eigenvalues) -> Tensor:
    """Σ⁻¹ = D⁻¹ V Λ⁻¹ Vᵀ D⁻¹ (수치 대칭화)"""
    d = as_tensor(inv_vol)
    v = as_tensor(vectors)
    lam_inv = as_tensor(inv_eigenvalues)
    n = v.shape[0]
    left = v * d.reshape(n, 1)
    precision = (left * lam_inv.reshape(1, -1)) @ left.T
    precision = 0.5 * (precision + precision.T)
    if not np.all(np.isfinite(precision.data)):
        raise NumericalError("역공분산에 비유한 값이 있습니다")
    return precision


def gmv_weights(precision) -> Tensor:
    """
    w = Σ⁻¹1 / (1ᵀΣ⁻¹1)

    Raises:
        NumericalError: 1ᵀΣ⁻¹1 ≤ 0
    """
    p = as_tensor(precision)
    raw = p.sum(axis=1)
    total = tsum(raw)
    if not total.data > 0:
        raise NumericalError(f"1ᵀΣ⁻¹1 = {float(total.data):.3e} ≤ 0 (역공분산 추정 실패)")
    return raw / total


def gmv_loss(weights, oos_returns) -> Tensor:
    """
    (n/Δt_out) Σ_t (wᵀr_t)²  (비중심 실현 2차 모멘트 기준)
    """
    w = as_tensor(weights)
    r = as_tensor(oos_returns)
    if r.ndim != 2 or r.shape[1] != w.shape[0]:
        raise ShapeError(f"OOS 수익률 shape {r.shape}가 가중치 {w.shape}와 맞지 않습니다")
    n_out, n = r.shape
    portfolio = r @ w
    return tsum(square(portfolio)) * (n / n_out)


def benchmark_covariance(returns: np.ndarray, cleaned_corr: np.ndarray) -> np.ndarray:
    """
    벤치마크 공분산 재조립 Σ̂ = D_MLE C D_MLE

    정제 상관행렬은 단위 대각으로 다시 정규화합니다.
    """
    std = np.sqrt(np.mean(returns ** 2, axis=0) - np.mean(returns, axis=0) ** 2)
    if np.any(std <= 0):
        raise NumericalError("분산 0인 자산이 있습니다")
    d = np.sqrt(np.diag(cleaned_corr))
    corr = cleaned_corr / np.outer(d, d)
    return corr * np.outer(std, std)


def eigen_weight_decomposition(matrix: np.ndarray, std: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    GMV 가중치의 고유모드 분해

    Args:
        matrix: 공분산 Σ (std 없음) 또는 상관행렬 C (std 지정)
        std: 자산별 변동성 (상관 기반 분해)

    Returns:
        rank, eigenvalue, c_k, c_k/λ_k, 재구성 가중치 검증 결과를 담은 DataFrame
        (attrs['weights']에 재구성 가중치)
    """
    from autodiff import eigh_array

    values, vectors = eigh_array(matrix)
    if std is None:
        c = vectors.T @ np.ones(len(values))
        scale = np.ones(len(values))
    else:
        scale = 1.0 / np.asarray(std, dtype=float)
        c = vectors.T @ scale
    # c_k ≥ 0 이 되도록 모드 방향 조정
    signs = np.where(c < 0, -1.0, 1.0)
    c = c * signs
    vectors = vectors * signs
    contribution = c / values
    raw = scale * (vectors @ contribution)
    weights = raw / raw.sum()

    frame = pd.DataFrame({
        'rank': np.arange(1, len(values) + 1),
        'eigenvalue': values,
        'c': c,
        'c_over_lambda': contribution,
    })
    frame.attrs['weights'] = weights
    return frame
