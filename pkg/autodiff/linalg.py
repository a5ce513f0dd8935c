"""미분 가능한 대칭 고유값 분해"""
from typing import Tuple
import logging

import numpy as np

from config.exceptions import NumericalError, ShapeError
from .tensor import Tensor, as_tensor, make_node

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
GAP_CLAMP = 1e12


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """각 고유벡터의 절대값 최대 성분이 양수가 되도록 부호 고정"""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh_array(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """numpy 배열 버전 (오름차순 고유값, 부호 고정 고유벡터)"""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"정방 행렬이 아닙니다: {matrix.shape}")
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    asym = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asym > SYMMETRY_TOLERANCE * scale:
        raise NumericalError(f"대칭 행렬이 아닙니다 (비대칭 크기 {asym:.3e})")
    if not np.all(np.isfinite(matrix)):
        raise NumericalError("행렬에 비유한 값이 있습니다")
    sym = 0.5 * (matrix + matrix.T)
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"고유값 분해 미수렴: {e}")
    return values, _sign_fix(vectors)


def gap_factors(values: np.ndarray) -> np.ndarray:
    """F_ij = 1/(λ_j - λ_i), 대각 0, 크기 GAP_CLAMP로 제한"""
    gaps = values[None, :] - values[:, None]
    with np.errstate(divide='ignore'):
        factors = np.where(gaps != 0.0, 1.0 / np.where(gaps != 0.0, gaps, 1.0), GAP_CLAMP)
    factors = np.clip(factors, -GAP_CLAMP, GAP_CLAMP)
    np.fill_diagonal(factors, 0.0)
    return factors


def eigh_sym(a) -> Tuple[Tensor, Tensor]:
    """
    대칭 행렬 고유값 분해

    Returns:
        (고유값 오름차순 (n,), 고유벡터 열 (n, n))
        역전파: Ā = V(diag(ḡ_λ) + F∘(VᵀV̄))Vᵀ 를 대칭화
    """
    a = as_tensor(a)
    values, vectors = eigh_array(a.data)

    def values_backward(g):
        grad = (vectors * g) @ vectors.T
        return (0.5 * (grad + grad.T),)

    def vectors_backward(g):
        inner = gap_factors(values) * (vectors.T @ g)
        grad = vectors @ inner @ vectors.T
        return (0.5 * (grad + grad.T),)

    lam = make_node(values, (a,), values_backward)
    vec = make_node(vectors, (a,), vectors_backward)
    return lam, vec
