"""해석 진단: 정제 스펙트럼 안정성"""
from typing import Callable, Dict, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import ShapeError
from .lstm import BiLstmCleaner

logger = logging.getLogger(__name__)

SpectrumMap = Callable[[np.ndarray, float], np.ndarray]

# n ≥ Δt 이면 표본 고유값에 0이 섞임
SPECTRUM_FLOOR = 1e-12


def _rank_stats(name: str, spectra: np.ndarray) -> pd.DataFrame:
    """스펙트럼 묶음(표본 × 순위)의 순위별 통계"""
    logs = np.log(np.maximum(spectra, SPECTRUM_FLOOR))
    return pd.DataFrame({
        'method': name,
        'rank': np.arange(1, spectra.shape[1] + 1),
        'median': np.median(spectra, axis=0),
        'lower': np.percentile(spectra, 2.5, axis=0),
        'upper': np.percentile(spectra, 97.5, axis=0),
        'log_std': logs.std(axis=0, ddof=0),
    })


def spectrum_stability_report(
    models: Sequence[BiLstmCleaner],
    samples: Sequence[Tuple[np.ndarray, float]],
    benchmarks: Optional[Dict[str, SpectrumMap]] = None,
) -> pd.DataFrame:
    """
    순위별 정제 고유값의 중앙값, 95% 구간, 로그 표준편차

    Args:
        models: 학습된 정제기 목록
        samples: (표본 고유값, q) 목록 (같은 n)
        benchmarks: 이름 → (고유값, q) → 정제 고유값 함수

    Returns:
        method, rank, median, lower, upper, log_std 열의 DataFrame
    """
    if len(samples) < 2:
        raise ShapeError("표본이 2개 이상 필요합니다")
    sizes = {len(values) for values, _ in samples}
    if len(sizes) != 1:
        raise ShapeError(f"표본 크기가 다릅니다: {sorted(sizes)}")

    raw = np.array([np.sort(values) for values, _ in samples])
    frames = [_rank_stats('raw', raw)]

    if models:
        cleaned = []
        for model in models:
            for values, q in samples:
                order = np.argsort(values, kind='stable')
                inverse_eig = model(np.asarray(values, dtype=float), q).data
                cleaned.append(1.0 / inverse_eig[order])
        frames.append(_rank_stats('nn', np.array(cleaned)))

    for name, fn in (benchmarks or {}).items():
        spectra = np.array([np.sort(fn(np.asarray(values, dtype=float), q)) for values, q in samples])
        frames.append(_rank_stats(name, spectra))

    report = pd.concat(frames, ignore_index=True)
    logger.info(f"스펙트럼 안정성 보고: 표본 {len(samples)}개, 방법 {report['method'].nunique()}개")
    return report
