"""정제 방식 태그 → 정제 상관행렬 / 공분산"""
from typing import Callable, Mapping, Optional, Tuple
import logging

import numpy as np

from autodiff import eigh_array
from config.exceptions import ConfigError
from portfolio.assembly import benchmark_covariance
from .average_oracle import clean_ao
from .cleaners import (
    clean_ls, clean_pm, clean_qis, clip_eigenvalues, correlation_matrix, oracle_correlation, reassemble,
)
from .models import AoTable, CleanConfig, CleanerTag

logger = logging.getLogger(__name__)


def _covariance_to_correlation(cov: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return corr


def clean_correlation(
    returns: np.ndarray,
    config: Optional[CleanConfig] = None,
    ao_tables: Optional[Mapping[Tuple[int, int], AoTable]] = None,
    reference: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    수익률 윈도우 → 정제 상관행렬 (단위 대각)

    Args:
        returns: Δt × n 수익률 윈도우
        config: 정제 설정
        ao_tables: (n, Δt_in) → AO 테이블 (없으면 config.ao_table CSV)
        reference: ORACLE용 기준 상관행렬
    """
    config = config or CleanConfig()
    returns = np.asarray(returns, dtype=float)
    dt, n = returns.shape
    q = n / dt
    tag = config.tag

    if tag == CleanerTag.LS:
        shrunk, _ = clean_ls(returns, config.ls_shrinkage)
        return _covariance_to_correlation(shrunk)

    corr = correlation_matrix(returns)
    if tag == CleanerTag.MLE:
        return corr
    if tag == CleanerTag.PM:
        return clean_pm(corr, config.pm_gamma)
    if tag == CleanerTag.ORACLE:
        if reference is None:
            raise ConfigError("ORACLE 정제에는 기준 상관행렬이 필요합니다")
        return oracle_correlation(corr, reference)

    values, vectors = eigh_array(corr)
    if tag == CleanerTag.QIS:
        cleaned = clean_qis(values, q)
    elif tag == CleanerTag.CLIP:
        cleaned = clip_eigenvalues(values, q, config.clip_edge)
    elif tag == CleanerTag.AO:
        if ao_tables is None:
            if config.ao_table is None:
                raise ConfigError("AO 정제에는 clean.ao_table 경로가 필요합니다")
            table = AoTable.from_csv(config.ao_table)
            ao_tables = {table.key: table}
        cleaned = clean_ao(ao_tables, values, dt)
    else:
        raise ConfigError(f"알 수 없는 정제 방식: {tag}")
    return reassemble(cleaned, vectors)


def estimate_covariance(returns: np.ndarray, config: Optional[CleanConfig] = None, **kwargs) -> np.ndarray:
    """벤치마크 공분산 D_MLE C_clean D_MLE"""
    return benchmark_covariance(np.asarray(returns, dtype=float), clean_correlation(returns, config, **kwargs))


SpectrumMap = Callable[[np.ndarray, float], np.ndarray]


def spectrum_map(tag: CleanerTag, config: Optional[CleanConfig] = None) -> SpectrumMap:
    """(고유값, q) → 정제 고유값 함수 (진단용)"""
    config = config or CleanConfig(tag=tag)
    if tag == CleanerTag.MLE:
        return lambda values, q: np.asarray(values, dtype=float)
    if tag == CleanerTag.QIS:
        return clean_qis
    if tag == CleanerTag.CLIP:
        return lambda values, q: clip_eigenvalues(values, q, config.clip_edge)
    raise ConfigError(f"{tag.value}는 스펙트럼 함수로 표현되지 않습니다")
