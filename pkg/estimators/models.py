"""
벤치마크 정제기 설정과 평균 오라클 테이블
"""
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from config.exceptions import DataValidationError, ShapeError

logger = logging.getLogger(__name__)


class CleanerTag(str, Enum):
    """상관행렬 정제 방식"""
    MLE = "MLE"
    LS = "LS"
    QIS = "QIS"
    PM = "PM"
    AO = "AO"
    CLIP = "CLIP"
    ORACLE = "ORACLE"


class CleanConfig(BaseModel):
    """벤치마크 정제기 설정"""
    model_config = ConfigDict(extra='forbid')

    tag: CleanerTag = Field(CleanerTag.QIS, description="정제 방식", json_schema_extra={"provenance": "paper"})
    pm_gamma: float = Field(1.5, ge=1.0, description="PM 지수 γ", json_schema_extra={"provenance": "design"})
    clip_edge: Optional[float] = Field(None, gt=0, description="CLIP 절단값 (없으면 (1+√q)²)",
                                       json_schema_extra={"provenance": "design"})
    ls_shrinkage: Optional[float] = Field(None, ge=0, le=1, description="LS 강도 고정값 (없으면 데이터 추정)",
                                          json_schema_extra={"provenance": "design"})
    ao_table: Optional[str] = Field(None, description="AO 고유값 테이블 CSV 경로",
                                    json_schema_extra={"provenance": "design"})
    ao_samples: int = Field(1000, ge=1, description="AO 부트스트랩 윈도우 수", json_schema_extra={"provenance": "design"})


@dataclass(frozen=True)
class AoTable:
    """
    평균 오라클 고유값 테이블 (순위 오름차순)

    입력 스펙트럼과 무관하게 (n, Δt_in)에 대해 고정된 고유값을 돌려줍니다.
    """
    n: int
    dt_in: int
    dt_out: int
    span_start: str
    span_end: str
    eigenvalues: np.ndarray
    samples: int

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=float)
        if values.shape != (self.n,):
            raise ShapeError(f"AO 테이블 길이 {values.shape}가 n={self.n}과 다릅니다")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise DataValidationError("AO 고유값은 양의 유한값이어야 합니다")
        object.__setattr__(self, 'eigenvalues', values)

    @property
    def key(self):
        return (self.n, self.dt_in)

    def to_csv(self, path: Union[str, Path]) -> None:
        header = (f"# n={self.n} dt_in={self.dt_in} dt_out={self.dt_out} "
                  f"span={self.span_start}..{self.span_end} samples={self.samples}\n")
        frame = pd.DataFrame({'rank': np.arange(1, self.n + 1), 'eigenvalue': self.eigenvalues})
        with open(path, 'w', encoding='utf-8') as f:
            f.write(header)
            frame.to_csv(f, index=False, float_format='%.17g')
        logger.info(f"AO 테이블 저장: {path} (n={self.n}, Δt_in={self.dt_in})")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'AoTable':
        with open(path, encoding='utf-8') as f:
            header = f.readline().strip()
        if not header.startswith('#'):
            raise DataValidationError(f"AO 테이블 헤더가 없습니다: {path}", details={'line': 1})
        meta = {}
        for token in header.lstrip('#').split():
            key, _, value = token.partition('=')
            meta[key] = value
        try:
            span_start, _, span_end = meta['span'].partition('..')
            frame = pd.read_csv(path, comment='#')
            table = cls(
                n=int(meta['n']), dt_in=int(meta['dt_in']), dt_out=int(meta['dt_out']),
                span_start=span_start, span_end=span_end,
                eigenvalues=frame.sort_values('rank')['eigenvalue'].to_numpy(dtype=float),
                samples=int(meta.get('samples', 0)),
            )
        except (KeyError, ValueError) as e:
            raise DataValidationError(f"AO 테이블 형식 오류: {path} ({e})")
        return table
