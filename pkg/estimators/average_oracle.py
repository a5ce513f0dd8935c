"""
평균 오라클(AO) 보정

과거 구간에서 무작위로 뽑은 윈도우마다 표본 고유벡터 기준 오라클 고유값을
실현 OOS 상관행렬에 대해 계산하고, 순위별로 평균해 고정 테이블을 만듭니다.
"""
from typing import Dict, Mapping, Optional, Tuple, Union
import logging

import numpy as np
import pandas as pd

from autodiff import eigh_array
from config.exceptions import ConfigError, DataValidationError, LeakageError, ShapeError
from config.seeds import STREAM_CALIBRATION, make_rng
from panel.models import ReturnPanel
from .cleaners import PSD_FLOOR, correlation_matrix, oracle_eigenvalues
from .models import AoTable

logger = logging.getLogger(__name__)

MAX_DRAW_ATTEMPTS = 50


def window_oracle(panel: ReturnPanel, start: int, columns, dt_in: int, dt_out: int) -> np.ndarray:
    """윈도우 하나의 오라클 고유값 (표본 고유값 오름차순 순위)"""
    inside = panel.window(start, start + dt_in, columns)
    outside = panel.window(start + dt_in, start + dt_in + dt_out, columns)
    _, vectors = eigh_array(correlation_matrix(inside))
    return oracle_eigenvalues(vectors, correlation_matrix(outside))


def calibrate_ao(
    panel: ReturnPanel,
    n: int,
    dt_in: int,
    dt_out: int,
    samples: int = 1000,
    seed: int = 0,
    span: Optional[Tuple[int, int]] = None,
    validation_start=None,
) -> AoTable:
    """
    AO 고유값 테이블 보정

    Args:
        panel: 수익률 패널
        n: 자산 수
        dt_in: 추정 윈도우 길이
        dt_out: OOS 윈도우 길이
        samples: 부트스트랩 윈도우 수
        seed: 시드
        span: 보정 구간 [start, stop) 행 위치 (기본 전체)
        validation_start: 검증 구간 시작일 (보정 구간은 그 이전이어야 함)

    Returns:
        AoTable
    """
    start, stop = span or (0, panel.n_days)
    if stop - start < dt_in + dt_out:
        raise ShapeError(f"보정 구간 {stop - start}일이 Δt_in + Δt_out = {dt_in + dt_out}보다 짧습니다")
    if validation_start is not None and panel.dates[stop - 1] >= pd.Timestamp(validation_start):
        raise LeakageError(
            f"보정 구간 끝 {panel.dates[stop - 1].date()}이 검증 시작 {validation_start} 이후입니다"
        )

    rng = make_rng(seed, STREAM_CALIBRATION, n, dt_in)
    last_start = stop - dt_in - dt_out
    total = np.zeros(n)
    drawn = 0
    for _ in range(samples):
        for _attempt in range(MAX_DRAW_ATTEMPTS):
            t0 = int(rng.integers(start, last_start + 1))
            complete = panel.complete_assets(t0, t0 + dt_in + dt_out)
            if complete.size >= n:
                break
        else:
            raise DataValidationError(f"결측 없는 자산이 {n}개 이상인 윈도우를 찾지 못했습니다")
        columns = np.sort(rng.choice(complete, size=n, replace=False))
        total += window_oracle(panel, t0, columns, dt_in, dt_out)
        drawn += 1

    average = np.maximum(total / drawn, PSD_FLOOR)
    table = AoTable(
        n=n, dt_in=dt_in, dt_out=dt_out,
        span_start=str(panel.dates[start].date()), span_end=str(panel.dates[stop - 1].date()),
        eigenvalues=average, samples=drawn,
    )
    logger.info(f"AO 보정 완료: n={n}, Δt_in={dt_in}, 윈도우 {drawn}개, 최대 고유값 {average[-1]:.3f}")
    return table


def clean_ao(tables: Union[AoTable, Mapping[Tuple[int, int], AoTable]], eigenvalues: np.ndarray,
             dt_in: int) -> np.ndarray:
    """
    AO 테이블 조회 (입력 고유값의 값은 쓰지 않고 순위만 사용)

    Returns:
        입력 순서에 맞춘 AO 고유값
    """
    values = np.asarray(eigenvalues, dtype=float)
    n = values.size
    lookup: Dict[Tuple[int, int], AoTable] = (
        {tables.key: tables} if isinstance(tables, AoTable) else dict(tables)
    )
    table = lookup.get((n, dt_in))
    if table is None:
        raise ConfigError(f"(n={n}, Δt_in={dt_in})에 대한 AO 테이블이 없습니다",
                          details={'available': sorted(lookup)})
    order = np.argsort(values, kind='stable')
    cleaned = np.empty(n)
    cleaned[order] = table.eigenvalues
    return cleaned
