"""
연 단위 재보정 일정

검증 연도 Y의 모델은 Y−1년 12월 31일까지의 데이터로 보정합니다.
거래일마다 보정 종료일이 그날보다 앞선 가장 최근 체크포인트를 고릅니다.
"""
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from config.exceptions import CheckpointError, LeakageError
from network.model import GmvNetwork, ensemble_precision
from panel.models import PanelStore, ReturnPanel
from .checkpoint import load_checkpoint, save_checkpoint
from .schemas import Checkpoint, TrainConfig
from .trainer import train_ensemble

logger = logging.getLogger(__name__)


def calibration_end_for(validation_date) -> date:
    """검증일이 속한 연도 직전 해의 12월 31일"""
    return date(pd.Timestamp(validation_date).year - 1, 12, 31)


@dataclass
class ScheduleEntry:
    calibration_end: date
    checkpoints: List[Checkpoint] = field(default_factory=list)
    _networks: Optional[List[GmvNetwork]] = None

    def networks(self) -> List[GmvNetwork]:
        if self._networks is None:
            self._networks = [ckpt.to_network() for ckpt in self.checkpoints]
        return self._networks


class CheckpointSchedule:
    """보정 종료일별 체크포인트 묶음 (같은 종료일 = 앙상블)"""

    def __init__(self, checkpoints: Sequence[Checkpoint]):
        if not checkpoints:
            raise CheckpointError("체크포인트가 하나 이상 필요합니다")
        grouped: Dict[date, List[Checkpoint]] = {}
        for ckpt in checkpoints:
            if ckpt.meta.calibration_end is None:
                raise CheckpointError("보정 종료일이 없는 체크포인트는 일정에 넣을 수 없습니다")
            grouped.setdefault(ckpt.meta.calibration_end, []).append(ckpt)
        self.entries = [ScheduleEntry(end, grouped[end]) for end in sorted(grouped)]
        dt_in = {ckpt.meta.dt_in for ckpt in checkpoints}
        if len(dt_in) != 1:
            raise CheckpointError(f"체크포인트의 Δt_in이 서로 다릅니다: {sorted(dt_in)}")
        self.dt_in = dt_in.pop()

    @classmethod
    def from_paths(cls, paths: Sequence[Union[str, Path]]) -> 'CheckpointSchedule':
        return cls([load_checkpoint(p) for p in paths])

    def select(self, trading_date) -> ScheduleEntry:
        """거래일에 쓸 수 있는 가장 최근 보정 묶음"""
        when = pd.Timestamp(trading_date).date()
        usable = [e for e in self.entries if e.calibration_end < when]
        if not usable:
            raise LeakageError(
                f"{when} 이전에 보정된 체크포인트가 없습니다 (가장 이른 보정 종료 {self.entries[0].calibration_end})"
            )
        return usable[-1]

    def precision(self, trading_date, window: np.ndarray) -> np.ndarray:
        """거래일 기준 앙상블 역공분산"""
        return ensemble_precision(self.select(trading_date).networks(), window)


def train_yearly(
    panel: ReturnPanel,
    config: TrainConfig,
    years: Sequence[int],
    output_dir: Union[str, Path],
    store: Optional[PanelStore] = None,
    span_days: Optional[int] = None,
) -> List[Path]:
    """
    검증 연도마다 직전 연말까지의 구간으로 학습하고 체크포인트를 저장합니다.

    Args:
        span_days: 보정 구간 길이 (거래일, 없으면 패널 처음부터)
    """
    output_dir = Path(output_dir)
    paths = []
    for year in years:
        end = calibration_end_for(date(year, 1, 1))
        stop = int(panel.dates.searchsorted(pd.Timestamp(end), side='right'))
        start = 0 if span_days is None else max(0, stop - span_days)
        yearly = config.model_copy(update={
            'calibration_start': panel.dates[start].date(),
            'calibration_end': end,
        })
        for result in train_ensemble(panel, yearly, store):
            path = output_dir / f"gmv_{year}_seed{result.checkpoint.meta.seed}.ckpt"
            paths.append(save_checkpoint(result.checkpoint, path))
        logger.info(f"{year}년 모델 보정 완료 (보정 종료 {end})")
    return paths
