"""
학습 설정과 표본/체크포인트 스키마
"""
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Dict, List, Optional
import hashlib
import json

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from network.vol_mlp import LAYER_SIZES


class TrainProfile(str, Enum):
    """학습 규모 프로필"""
    PAPER = "paper"
    DESK = "desk"


class TrainConfig(BaseModel):
    """학습 설정 (기본값 = 전체 규모 프로필)"""
    model_config = ConfigDict(extra='forbid')

    dt_in: int = Field(1200, ge=3, description="입력 윈도우 Δt_in (거래일)", json_schema_extra={"provenance": "paper"})
    dt_out: int = Field(5, ge=1, description="OOS 윈도우 Δt_out (거래일)", json_schema_extra={"provenance": "paper"})
    n_min: int = Field(50, ge=2, description="표본 자산 수 하한", json_schema_extra={"provenance": "paper"})
    n_max: int = Field(350, ge=2, description="표본 자산 수 상한", json_schema_extra={"provenance": "paper"})
    epochs: int = Field(100, ge=0, description="에폭 수", json_schema_extra={"provenance": "paper"})
    steps_per_epoch: int = Field(500, ge=1, description="에폭당 배치 수", json_schema_extra={"provenance": "paper"})
    batch_size: int = Field(32, ge=1, description="배치 크기", json_schema_extra={"provenance": "paper"})
    learning_rate: float = Field(1e-4, gt=0, description="초기 학습률", json_schema_extra={"provenance": "paper"})
    decay: float = Field(0.99, gt=0, le=1, description="decay_every 배치마다 곱해지는 감쇠율",
                         json_schema_extra={"provenance": "paper"})
    decay_every: int = Field(500, ge=1, description="감쇠 주기 (배치)", json_schema_extra={"provenance": "paper"})
    clip_norm: float = Field(1.0, gt=0, description="그래디언트 전체 노름 상한", json_schema_extra={"provenance": "paper"})
    width: int = Field(64, ge=1, description="LSTM 은닉 폭 ω", json_schema_extra={"provenance": "paper"})
    seed: int = Field(0, description="난수 시드", json_schema_extra={"provenance": "design"})
    ensemble_seeds: List[int] = Field(default_factory=list, description="독립 학습 시드 목록 (앙상블)",
                                      json_schema_extra={"provenance": "paper"})
    calibration_start: Optional[date] = Field(None, description="보정 구간 시작일", json_schema_extra={"provenance": "design"})
    calibration_end: Optional[date] = Field(None, description="보정 구간 종료일", json_schema_extra={"provenance": "design"})
    validation_days: int = Field(252, ge=1, description="검증 표본을 뽑는 보정 구간 마지막 일수",
                                 json_schema_extra={"provenance": "design"})
    validation_samples: int = Field(64, ge=0, description="고정 검증 표본 수", json_schema_extra={"provenance": "design"})
    use_universe_filter: bool = Field(False, description="표본 자산을 유니버스 필터 통과 자산에서 뽑기",
                                      json_schema_extra={"provenance": "paper"})
    threads: int = Field(1, ge=1, description="배치 표본 평가 스레드 수 (1 = 결정적 기준 모드)",
                         json_schema_extra={"provenance": "design"})

    @model_validator(mode='after')
    def _check(self):
        if self.n_min > self.n_max:
            raise ValueError(f"n_min({self.n_min})이 n_max({self.n_max})보다 큽니다")
        if self.n_max >= self.dt_in:
            raise ValueError(f"n_max({self.n_max})는 Δt_in({self.dt_in})보다 작아야 합니다")
        if self.calibration_start and self.calibration_end and self.calibration_start >= self.calibration_end:
            raise ValueError("보정 구간 시작일이 종료일보다 늦습니다")
        return self

    @classmethod
    def for_profile(cls, profile: TrainProfile, **overrides) -> 'TrainConfig':
        """이름 붙은 규모 프로필"""
        if TrainProfile(profile) == TrainProfile.DESK:
            base = dict(dt_in=120, n_min=20, n_max=60, epochs=2, steps_per_epoch=50,
                        batch_size=8, validation_samples=16)
        else:
            base = {}
        base.update(overrides)
        return cls(**base)

    def learning_rate_at(self, batch: int) -> float:
        """배치 b의 학습률 lr₀·decay^(b/decay_every)"""
        return self.learning_rate * self.decay ** (batch / self.decay_every)

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode='json'), sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


@dataclass
class TrainSample:
    """
    학습 표본 하나

    입력 [t−Δt_in, t−1], OOS [t+1, t+Δt_out] (하루 간격)
    """
    t: int
    columns: np.ndarray
    window: np.ndarray
    oos: np.ndarray
    decision_date: Optional[date] = None

    @property
    def n(self) -> int:
        return self.window.shape[1]

    @property
    def q(self) -> float:
        return self.n / self.window.shape[0]

    @property
    def input_rows(self):
        return self.t - self.window.shape[0], self.t

    @property
    def oos_rows(self):
        return self.t + 1, self.t + 1 + self.oos.shape[0]


class CheckpointMeta(BaseModel):
    """체크포인트 메타데이터"""
    width: int
    dt_in: int
    layer_sizes: List[int] = Field(default_factory=lambda: list(LAYER_SIZES))
    config_hash: str = ""
    calibration_end: Optional[date] = None
    seed: int = 0
    epoch: int = 0
    param_count: int = 0


@dataclass
class Checkpoint:
    """체크포인트: 메타데이터와 정규 순서의 이름 있는 파라미터 배열"""
    meta: CheckpointMeta
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_network(self):
        from network.model import GmvNetwork
        return GmvNetwork(self.meta.dt_in, width=self.meta.width, arrays=self.arrays)

    @classmethod
    def from_network(cls, network, **meta) -> 'Checkpoint':
        payload = dict(width=network.width, dt_in=network.dt_in, param_count=network.n_params)
        payload.update(meta)
        return cls(meta=CheckpointMeta(**payload), arrays=network.copy_arrays())


@dataclass
class EpochRecord:
    """에폭별 손실 기록"""
    epoch: int
    train_loss: float
    validation_loss: float
    skipped: int
    learning_rate: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: List[EpochRecord] = field(default_factory=list)

    def history_frame(self):
        import pandas as pd
        return pd.DataFrame([vars(r) for r in self.history],
                            columns=['epoch', 'train_loss', 'validation_loss', 'skipped', 'learning_rate'])
