"""
수익률 패널 데이터 모델

- ReturnPanel: 날짜 × 자산 일간 수익률 행렬 (조정 종가 기준)
- AssetDayRecord: 자산-일 단위 원천 레코드
- PanelStore: 원천 레코드 저장소 (long 포맷 + wide 접근자)
- SyntheticMarketSpec / FilterConfig: 생성기·유니버스 필터 설정
"""
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.exceptions import DataValidationError, ShapeError

# 일간 수익률 절대값 상한 (수집 단계에서 강제)
RETURN_SANITY_BOUND = 1.0

RECORD_COLUMNS = [
    'date', 'asset_id', 'open', 'close', 'adj_factor', 'volume',
    'shares_outstanding', 'dividend_cash', 'split_ratio', 'auction_flag', 'delist_flag',
]
OPTIONAL_COLUMNS = ['issuer_id']


@dataclass(frozen=True)
class ReturnPanel:
    """일간 close-to-close 수익률 패널 (행: 날짜 오름차순, 열: 자산)"""
    dates: pd.DatetimeIndex
    assets: List[str]
    returns: np.ndarray

    def __post_init__(self):
        if self.returns.ndim != 2:
            raise ShapeError(f"수익률 행렬은 2차원이어야 합니다: ndim={self.returns.ndim}")
        if self.returns.shape != (len(self.dates), len(self.assets)):
            raise ShapeError(
                f"수익률 행렬 크기 {self.returns.shape}가 날짜 {len(self.dates)} × 자산 {len(self.assets)}와 다릅니다"
            )
        if len(self.dates) > 1 and not self.dates.is_monotonic_increasing:
            raise DataValidationError("날짜가 오름차순이 아닙니다")
        if not self.dates.is_unique:
            raise DataValidationError("중복 날짜가 있습니다")
        finite = self.returns[np.isfinite(self.returns)]
        if finite.size and np.max(np.abs(finite)) >= RETURN_SANITY_BOUND:
            raise DataValidationError("일간 수익률 절대값이 1 이상인 값이 있습니다")

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @property
    def q(self) -> float:
        """종횡비 q = n / Δt"""
        return self.n_assets / self.n_days

    def asset_index(self, assets: Sequence[str]) -> np.ndarray:
        lookup = {a: i for i, a in enumerate(self.assets)}
        try:
            return np.array([lookup[a] for a in assets], dtype=int)
        except KeyError as e:
            raise DataValidationError(f"패널에 없는 자산: {e.args[0]}")

    def window(self, start: int, stop: int, columns: Optional[Sequence[int]] = None) -> np.ndarray:
        """행 [start, stop) 구간 수익률 (결측 금지)"""
        if start < 0 or stop > self.n_days or start >= stop:
            raise ShapeError(f"잘못된 윈도우: [{start}, {stop}) / 전체 {self.n_days}일")
        block = self.returns[start:stop]
        if columns is not None:
            block = block[:, np.asarray(columns, dtype=int)]
        if np.isnan(block).any():
            raise DataValidationError(f"윈도우 [{start}, {stop})에 결측 수익률이 있습니다")
        return block

    def complete_assets(self, start: int, stop: int) -> np.ndarray:
        """구간 [start, stop)에 결측이 없는 자산 인덱스"""
        block = self.returns[max(start, 0):stop]
        return np.flatnonzero(~np.isnan(block).any(axis=0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.returns, index=self.dates, columns=self.assets)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'ReturnPanel':
        return cls(
            dates=pd.DatetimeIndex(frame.index),
            assets=[str(c) for c in frame.columns],
            returns=frame.to_numpy(dtype=float),
        )


class AssetDayRecord(BaseModel):
    """자산-일 원천 레코드"""
    date: date
    asset_id: str
    open: Optional[float] = Field(None, gt=0, description="시가 (통화)")
    close: float = Field(..., gt=0, description="종가 (통화)")
    adj_factor: float = Field(1.0, gt=0, description="누적 조정 계수")
    volume: float = Field(0.0, ge=0, description="거래량 (주)")
    shares_outstanding: float = Field(0.0, ge=0, description="발행 주식 수")
    dividend_cash: float = Field(0.0, ge=0, description="주당 현금 배당")
    split_ratio: float = Field(1.0, gt=0, description="분할 비율 (1 = 없음)")
    auction_flag: bool = Field(True, description="종가 단일가 매매 참여 여부")
    delist_flag: bool = Field(False, description="상장폐지일 여부")
    issuer_id: Optional[str] = Field(None, description="발행사 ID (비어 있으면 자산 ID)")


class PanelStore:
    """
    자산-일 레코드 저장소

    long 포맷 DataFrame(인덱스: date, asset_id)을 보관하고,
    필터·시뮬레이터가 쓰는 wide 행렬(날짜 × 자산)을 캐시합니다.
    """

    def __init__(self, records: pd.DataFrame):
        """
        Args:
            records: RECORD_COLUMNS(+ issuer_id) 열을 가진 long 포맷 DataFrame
        """
        frame = records.copy()
        frame['date'] = pd.to_datetime(frame['date'])
        frame['asset_id'] = frame['asset_id'].astype(str)
        if 'issuer_id' not in frame.columns:
            frame['issuer_id'] = frame['asset_id']
        frame['issuer_id'] = frame['issuer_id'].fillna(frame['asset_id']).astype(str)
        frame = frame.sort_values(['date', 'asset_id'], kind='mergesort')
        self.records = frame.set_index(['date', 'asset_id'])
        self.dates = pd.DatetimeIndex(self.records.index.get_level_values('date').unique())
        self.assets = sorted(self.records.index.get_level_values('asset_id').unique().tolist())
        self._wide: Dict[str, pd.DataFrame] = {}

    def wide(self, column: str) -> pd.DataFrame:
        """열 하나를 날짜 × 자산 행렬로"""
        if column not in self._wide:
            table = self.records[column].unstack('asset_id')
            self._wide[column] = table.reindex(index=self.dates, columns=self.assets)
        return self._wide[column]

    @property
    def close(self) -> pd.DataFrame:
        return self.wide('close')

    @property
    def open(self) -> pd.DataFrame:
        return self.wide('open')

    @property
    def adjusted_close(self) -> pd.DataFrame:
        if 'adjusted_close' not in self._wide:
            self._wide['adjusted_close'] = self.close * self.wide('adj_factor').fillna(1.0)
        return self._wide['adjusted_close']

    @property
    def market_cap(self) -> pd.DataFrame:
        if 'market_cap' not in self._wide:
            self._wide['market_cap'] = self.close * self.wide('shares_outstanding')
        return self._wide['market_cap']

    def issuers(self) -> Dict[str, str]:
        """자산 → 발행사 매핑 (마지막 레코드 기준)"""
        last = self.records['issuer_id'].groupby(level='asset_id').last()
        return last.to_dict()

    def date_position(self, when) -> int:
        try:
            return int(self.dates.get_loc(pd.Timestamp(when)))
        except KeyError:
            raise DataValidationError(f"거래일이 아닙니다: {when}")

    def record(self, when, asset_id: str) -> AssetDayRecord:
        row = self.records.loc[(pd.Timestamp(when), asset_id)]
        payload = {k: (None if pd.isna(v) else v) for k, v in row.to_dict().items()}
        return AssetDayRecord(date=pd.Timestamp(when).date(), asset_id=asset_id, **{
            k: v for k, v in payload.items() if v is not None
        })

    def return_panel(self) -> ReturnPanel:
        """조정 종가 기준 수익률 패널 (첫 거래일 제외)"""
        adjusted = self.adjusted_close
        returns = adjusted.pct_change(fill_method=None).iloc[1:]
        return ReturnPanel.from_frame(returns)

    def to_csv(self, path) -> None:
        """수집 포맷 CSV로 저장"""
        frame = self.records.reset_index()
        frame['date'] = frame['date'].dt.strftime('%Y-%m-%d')
        columns = RECORD_COLUMNS + (['issuer_id'] if (frame['issuer_id'] != frame['asset_id']).any() else [])
        frame[columns].to_csv(path, index=False, float_format='%.10g')


class InnovationLaw(str, Enum):
    """혁신항 분포"""
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"


class SyntheticMarketSpec(BaseModel):
    """합성 팩터 시장 설정"""
    model_config = ConfigDict(extra='forbid')

    n_assets: int = Field(100, ge=1, description="자산 수", json_schema_extra={"provenance": "design"})
    n_days: int = Field(1500, ge=2, description="수익률 일수", json_schema_extra={"provenance": "design"})
    n_factors: int = Field(3, ge=0, description="팩터 수", json_schema_extra={"provenance": "design"})
    loading_scale: float = Field(0.01, ge=0, description="팩터 적재 크기 (일간 수익률 단위)",
                                 json_schema_extra={"provenance": "design"})
    idio_vol_min: float = Field(0.15, gt=0, description="고유 변동성 하한 (연율)",
                                json_schema_extra={"provenance": "design"})
    idio_vol_max: float = Field(0.45, gt=0, description="고유 변동성 상한 (연율)",
                                json_schema_extra={"provenance": "design"})
    innovation: InnovationLaw = Field(InnovationLaw.GAUSSIAN, description="혁신항 분포",
                                      json_schema_extra={"provenance": "design"})
    nu: float = Field(5.0, description="Student-t 자유도 (4~6이 주식 수익률에 가까움)",
                      json_schema_extra={"provenance": "paper"})
    seed: int = Field(7, description="난수 시드", json_schema_extra={"provenance": "design"})

    # 원천 레코드 생성 옵션
    start_date: date = Field(date(2000, 1, 3), description="첫 거래일", json_schema_extra={"provenance": "design"})
    split_rate: float = Field(0.0, ge=0, description="자산-일당 분할 확률", json_schema_extra={"provenance": "design"})
    dividend_rate: float = Field(0.0, ge=0, description="자산-일당 배당 확률", json_schema_extra={"provenance": "design"})
    dividend_yield: float = Field(0.005, ge=0, description="배당 1회 수익률", json_schema_extra={"provenance": "design"})
    delist_rate: float = Field(0.0, ge=0, description="자산별 상장폐지 확률", json_schema_extra={"provenance": "design"})
    missing_open_rate: float = Field(0.0, ge=0, le=1, description="시가 결측 확률",
                                     json_schema_extra={"provenance": "design"})

    @model_validator(mode='after')
    def _check(self):
        if self.innovation == InnovationLaw.STUDENT_T and self.nu <= 2:
            raise ValueError("Student-t 자유도는 2보다 커야 합니다 (유한 분산)")
        if self.idio_vol_max < self.idio_vol_min:
            raise ValueError("idio_vol_max는 idio_vol_min 이상이어야 합니다")
        return self


class FilterConfig(BaseModel):
    """투자 유니버스 필터 설정"""
    model_config = ConfigDict(extra='forbid')

    history_days: int = Field(1200, ge=1, description="전체 이력 윈도우 (거래일)", json_schema_extra={"provenance": "paper"})
    auction_window: int = Field(252, ge=1, description="단일가 참여율 롤링 윈도우", json_schema_extra={"provenance": "design"})
    auction_min_fraction: float = Field(0.95, ge=0, le=1, description="롤링 윈도우 최소 단일가 참여율",
                                        json_schema_extra={"provenance": "paper"})
    recent_days: int = Field(5, ge=1, description="최근 유동성 윈도우", json_schema_extra={"provenance": "paper"})
    min_volume_fraction: float = Field(0.01, ge=0, description="발행주식/시총 대비 최소 거래 비율",
                                       json_schema_extra={"provenance": "paper"})
    min_shares_outstanding: float = Field(5e6, ge=0, description="최소 발행 주식 수", json_schema_extra={"provenance": "paper"})
    min_price: float = Field(10.0, ge=0, description="최소 가격", json_schema_extra={"provenance": "paper"})
    max_price: float = Field(2000.0, gt=0, description="최대 가격", json_schema_extra={"provenance": "paper"})
    vol_windows: List[int] = Field([5, 20], description="저분산 이상치 판정 윈도우", json_schema_extra={"provenance": "paper"})
    iqr_multiplier: float = Field(1.5, ge=0, description="IQR 배수", json_schema_extra={"provenance": "paper"})
    delist_lookahead: int = Field(5, ge=0, description="상장폐지 예고 제외 구간 (Δt_out)", json_schema_extra={"provenance": "paper"})
    max_correlation: float = Field(0.95, gt=0, le=1, description="중복 제거 상관 임계값", json_schema_extra={"provenance": "paper"})
    one_class_per_issuer: bool = Field(True, description="발행사당 한 종류 주식만 유지", json_schema_extra={"provenance": "paper"})


@dataclass
class UniverseSelection:
    """필터 결과"""
    assets: List[str]
    shortfall: bool = False
    excluded: Dict[str, int] = field(default_factory=dict)
    degenerate_volatility: bool = False
