"""
백테스트 설정과 결과
"""
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from estimators.models import CleanerTag
from portfolio.assembly import WeightConstraint

NN_STRATEGY = "NN"
UNIVARIATE_STRATEGIES = ("ERB", "MCW")
STRATEGIES = (NN_STRATEGY,) + tuple(tag.value for tag in CleanerTag) + UNIVARIATE_STRATEGIES

METRIC_COLUMNS = [
    'loss', 'ann_volatility', 'ann_return', 'sharpe', 'sortino',
    'turnover', 'leverage', 'n_eff', 'max_drawdown',
]


class BacktestConfig(BaseModel):
    """무마찰 부트스트랩 백테스트 설정"""
    model_config = ConfigDict(extra='forbid')

    strategy: str = Field("NN", description=f"전략 ({' | '.join(STRATEGIES)})", json_schema_extra={"provenance": "paper"})
    checkpoints: List[str] = Field(default_factory=list, description="NN 체크포인트 경로 목록",
                                   json_schema_extra={"provenance": "design"})
    constraint: WeightConstraint = Field(WeightConstraint.UNCONSTRAINED, description="가중치 제약",
                                         json_schema_extra={"provenance": "paper"})
    n: int = Field(300, ge=1, description="바스켓 자산 수", json_schema_extra={"provenance": "paper"})
    rebalances: int = Field(250, ge=1, description="리밸런싱 횟수", json_schema_extra={"provenance": "paper"})
    interval: int = Field(5, ge=1, description="리밸런싱 간격 (거래일)", json_schema_extra={"provenance": "paper"})
    dt_in: int = Field(1200, ge=2, description="추정 윈도우 Δt_in", json_schema_extra={"provenance": "paper"})
    dt_out: int = Field(5, ge=1, description="손실 평가 OOS 윈도우 Δt_out", json_schema_extra={"provenance": "paper"})
    replications: int = Field(1000, ge=1, description="독립 백테스트 수", json_schema_extra={"provenance": "paper"})
    span_start: Optional[date] = Field(None, description="시작일 추출 구간 시작", json_schema_extra={"provenance": "design"})
    span_end: Optional[date] = Field(None, description="시작일 추출 구간 끝", json_schema_extra={"provenance": "design"})
    seed: int = Field(0, description="난수 시드", json_schema_extra={"provenance": "design"})
    threads: int = Field(1, ge=1, description="복제 병렬 스레드 수", json_schema_extra={"provenance": "design"})

    @field_validator('strategy')
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        value = value.upper()
        if value not in STRATEGIES:
            raise ValueError(f"알 수 없는 전략 '{value}' (가능: {', '.join(STRATEGIES)})")
        return value

    @property
    def horizon(self) -> int:
        """시작 행 이후 필요한 거래일 수 (체결일 하루 포함)"""
        return 1 + self.rebalances * self.interval + max(0, self.dt_out - self.interval)


@dataclass
class ReplicationResult:
    """복제 하나의 기록"""
    replication: int
    start_date: date
    daily_returns: pd.Series
    weights: List[pd.Series] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    replaced: int = 0
    metrics: Dict[str, float] = field(default_factory=dict)


@dataclass
class BacktestReport:
    """복제별 지표 + 집계"""
    strategy: str
    constraint: WeightConstraint
    replications: pd.DataFrame
    drawdown_by_year: pd.DataFrame = field(default_factory=pd.DataFrame)
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def aggregate(self) -> pd.Series:
        return self.replications[METRIC_COLUMNS].mean(axis=0)

    def summary_frame(self) -> pd.DataFrame:
        """복제별 행 + 집계 행"""
        rows = self.replications.copy()
        mean_row = {col: self.aggregate[col] for col in METRIC_COLUMNS}
        mean_row['replication'] = 'mean'
        return pd.concat([rows, pd.DataFrame([mean_row])], ignore_index=True)

    def table(self) -> str:
        """사람이 읽는 요약 표"""
        agg = self.aggregate
        header = f"{'전략':<8}{'제약':<15}" + ''.join(f"{c:>15}" for c in METRIC_COLUMNS)
        line = f"{self.strategy:<8}{self.constraint.value:<15}" + ''.join(f"{agg[c]:>15.6g}" for c in METRIC_COLUMNS)
        return header + '\n' + line
