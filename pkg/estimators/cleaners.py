"""
회전 불변 상관행렬 정제기

표본 고유벡터는 유지하고 고유값만 바꾸는 벤치마크 추정기 모음입니다.
정제기는 항상 전체 스펙트럼과 q = n/Δt 를 함께 받습니다.
"""
from typing import Optional, Tuple
import logging

import numpy as np
from sklearn.covariance import empirical_covariance, ledoit_wolf_shrinkage
from sklearn.isotonic import isotonic_regression

from autodiff import eigh_array
from config.exceptions import ConfigError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

PSD_FLOOR = 1e-10
ORTHONORMAL_TOLERANCE = 1e-8
STOCHASTIC_TOLERANCE = 1e-10


def correlation_matrix(returns: np.ndarray) -> np.ndarray:
    """표본 상관행렬 (모집단 표준편차, 대각 1)"""
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 2 or returns.shape[0] < 2:
        raise ShapeError(f"수익률 행렬 shape {returns.shape}")
    std = returns.std(axis=0)
    if np.any(std <= 0):
        raise NumericalError(f"분산 0인 자산 열이 있습니다: {np.flatnonzero(std <= 0).tolist()}")
    z = (returns - returns.mean(axis=0)) / std
    corr = z.T @ z / returns.shape[0]
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def reassemble(eigenvalues: np.ndarray, eigenvectors: np.ndarray, unit_diagonal: bool = True) -> np.ndarray:
    """V diag(λ) Vᵀ (필요 시 단위 대각으로 재정규화)"""
    matrix = (eigenvectors * eigenvalues) @ eigenvectors.T
    matrix = 0.5 * (matrix + matrix.T)
    if unit_diagonal:
        d = np.sqrt(np.diag(matrix))
        matrix = matrix / np.outer(d, d)
        np.fill_diagonal(matrix, 1.0)
    return matrix


def marchenko_pastur_edge(q: float) -> float:
    """단위 분산 잡음 스펙트럼 상단 경계 (1 + √q)²"""
    return (1.0 + np.sqrt(q)) ** 2


def clean_mle(corr: np.ndarray) -> np.ndarray:
    """표본 상관행렬 그대로"""
    return np.asarray(corr, dtype=float)


def clean_ls(returns: np.ndarray, shrinkage: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Ledoit–Wolf 선형 축소 S* = (1 − ρ)S + ρ·μI

    Args:
        returns: Δt × n 수익률
        shrinkage: ρ 고정값 (없으면 데이터에서 추정)

    Returns:
        (축소 공분산, ρ)
    """
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 2 or returns.shape[0] < 2:
        raise ShapeError(f"LS는 Δt ≥ 2가 필요합니다: {returns.shape}")
    sample = empirical_covariance(returns)
    if shrinkage is None:
        rho = float(ledoit_wolf_shrinkage(returns))
    else:
        rho = float(shrinkage)
    rho = float(np.clip(rho, 0.0, 1.0))
    mu = np.trace(sample) / sample.shape[0]
    shrunk = (1.0 - rho) * sample + rho * mu * np.eye(sample.shape[0])
    logger.debug(f"LS 축소 강도 ρ={rho:.4f}")
    return shrunk, rho


def clean_pm(corr: np.ndarray, gamma: float = 1.5) -> np.ndarray:
    """
    거듭제곱 사상: 비대각 c_ij → sign(c_ij)|c_ij|^γ

    결과가 양의 준정부호가 아니면 고유값을 하한으로 자르고 단위 대각으로 되돌립니다.
    """
    if gamma < 1:
        raise ConfigError(f"PM 지수 γ는 1 이상이어야 합니다: {gamma}")
    corr = np.asarray(corr, dtype=float)
    mapped = np.sign(corr) * np.abs(corr) ** gamma
    mapped = 0.5 * (mapped + mapped.T)
    np.fill_diagonal(mapped, 1.0)
    values, vectors = np.linalg.eigh(mapped)
    if values[0] < PSD_FLOOR:
        logger.info(f"PM 결과 최소 고유값 {values[0]:.3e} → 준정부호 사영")
        mapped = reassemble(np.maximum(values, PSD_FLOOR), vectors)
    return mapped


def clean_qis(eigenvalues: np.ndarray, q: float) -> np.ndarray:
    """
    이차-역 축소(QIS) 비선형 고유값 축소

    역고유값의 평활 Stein 축소자를 계산한 뒤 trace를 보존하고,
    isotonic 회귀로 순위 단조성을 강제합니다.

    Args:
        eigenvalues: 표본 고유값 (임의 순서)
        q: n/Δt (< 1)

    Returns:
        축소 고유값 (입력과 같은 순서)
    """
    if q >= 1:
        raise ConfigError(f"QIS는 q < 1에서만 지원합니다 (q={q:.3f})")
    values = np.asarray(eigenvalues, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ShapeError("고유값이 2개 이상 필요합니다")
    if np.any(values <= 0):
        raise NumericalError("q < 1에서 표본 고유값은 양수여야 합니다")

    order = np.argsort(values, kind='stable')
    lam = values[order]
    p = lam.size
    h = min(q ** 2, 1.0 / q ** 2) ** 0.35 / p ** 0.35

    inv_lam = 1.0 / lam
    lj = np.repeat(inv_lam[:, np.newaxis], p, axis=1)
    lj_i = lj - lj.T
    denominator = lj_i * lj_i + lj * lj * h ** 2
    theta = np.mean(lj * lj_i / denominator, axis=0)
    h_theta = np.mean(lj * lj * h / denominator, axis=0)
    a_theta2 = theta ** 2 + h_theta ** 2

    delta = 1.0 / ((1 - q) ** 2 * inv_lam + 2 * q * (1 - q) * inv_lam * theta + q ** 2 * inv_lam * a_theta2)
    total = lam.sum()
    delta = delta * (total / delta.sum())
    delta = isotonic_regression(delta, increasing=True)
    delta = delta * (total / delta.sum())
    if np.any(delta <= 0):
        raise NumericalError("QIS 축소 고유값이 양수가 아닙니다")

    shrunk = np.empty_like(delta)
    shrunk[order] = delta
    return shrunk


def clip_eigenvalues(eigenvalues: np.ndarray, q: float, edge: Optional[float] = None) -> np.ndarray:
    """
    고유값 절단: 경계 이하 고유값을 그 평균으로 대체 (trace 보존)
    """
    values = np.asarray(eigenvalues, dtype=float)
    edge = marchenko_pastur_edge(q) if edge is None else edge
    noise = values < edge
    clipped = values.copy()
    if noise.any():
        clipped[noise] = values[noise].mean()
    logger.debug(f"CLIP: 경계 {edge:.4f} 아래 {int(noise.sum())}개 평탄화")
    return clipped


def bistochastic_overlap(sample_vectors: np.ndarray, reference_vectors: np.ndarray) -> np.ndarray:
    """ψ_kl = (v̂_kᵀ v_l)²"""
    return (sample_vectors.T @ reference_vectors) ** 2


def oracle_eigenvalues(sample_vectors: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """
    Frobenius 오라클 고유값 f_k = Σ_l λ_l ψ_kl = v̂_kᵀ C v̂_k

    Args:
        sample_vectors: 표본 고유벡터 (열, 직교정규)
        reference: 기준 상관행렬 (대칭 PSD)

    Raises:
        NumericalError: 직교정규가 아닌 고유벡터, 이중 확률 조건 위반
    """
    v_hat = np.asarray(sample_vectors, dtype=float)
    reference = np.asarray(reference, dtype=float)
    n = v_hat.shape[0]
    if v_hat.shape != (n, n) or reference.shape != (n, n):
        raise ShapeError(f"고유벡터 {v_hat.shape}와 기준 행렬 {reference.shape}의 shape가 맞지 않습니다")
    gram_error = np.max(np.abs(v_hat.T @ v_hat - np.eye(n)))
    if gram_error > ORTHONORMAL_TOLERANCE:
        raise NumericalError(f"표본 고유벡터가 직교정규가 아닙니다 (오차 {gram_error:.2e})")

    lam, vectors = eigh_array(reference)
    psi = bistochastic_overlap(v_hat, vectors)
    off = max(np.max(np.abs(psi.sum(axis=0) - 1)), np.max(np.abs(psi.sum(axis=1) - 1)))
    if off > STOCHASTIC_TOLERANCE:
        raise NumericalError(f"중첩 행렬이 이중 확률 행렬이 아닙니다 (오차 {off:.2e})")
    oracle = psi @ lam

    direct = np.einsum('ik,ij,jk->k', v_hat, reference, v_hat)
    if not np.allclose(oracle, direct, rtol=1e-8, atol=1e-10):
        logger.warning(f"오라클 고유값 교차 검증 차이 {np.max(np.abs(oracle - direct)):.3e}")
    return oracle


def oracle_correlation(sample_corr: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """표본 고유벡터 + 오라클 고유값으로 재조립한 상관행렬"""
    _, vectors = eigh_array(sample_corr)
    oracle = oracle_eigenvalues(vectors, reference)
    return reassemble(np.maximum(oracle, PSD_FLOOR), vectors)
