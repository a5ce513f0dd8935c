"""기준금리 시계열 (date,rate CSV 또는 상수)"""
from pathlib import Path
from typing import Optional, Union
import logging

import pandas as pd

from config.exceptions import DataValidationError

logger = logging.getLogger(__name__)


class ReferenceRates:
    """
    연율 기준금리 φ^(r)

    날짜 t의 금리는 t 이전(포함) 마지막 관측값입니다.
    """

    def __init__(self, series: Optional[pd.Series] = None, constant: float = 0.0):
        self.constant = constant
        self.series = None
        if series is not None:
            series = series.sort_index()
            if not series.index.is_unique:
                raise DataValidationError("기준금리 CSV에 중복 날짜가 있습니다")
            if (series < 0).any() or series.isna().any():
                raise DataValidationError("기준금리는 0 이상이어야 합니다")
            self.series = series

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'ReferenceRates':
        try:
            frame = pd.read_csv(path, dtype={'rate': float})
        except (OSError, ValueError) as e:
            raise DataValidationError(f"기준금리 CSV를 읽을 수 없습니다: {path} ({e})")
        missing = {'date', 'rate'} - set(frame.columns)
        if missing:
            raise DataValidationError(f"기준금리 CSV 열 누락: {sorted(missing)}")
        series = pd.Series(frame['rate'].to_numpy(), index=pd.to_datetime(frame['date']))
        logger.info(f"기준금리 {len(series)}건 로드: {path}")
        return cls(series)

    def rate_at(self, when) -> float:
        if self.series is None:
            return self.constant
        pos = self.series.index.searchsorted(pd.Timestamp(when), side='right') - 1
        if pos < 0:
            raise DataValidationError(f"{pd.Timestamp(when).date()} 이전 기준금리가 없습니다")
        return float(self.series.iloc[pos])
