"""
학습 표본 추출

결정일 t를 보정 구간 안에서 균등하게, 자산 수 n을 [n_min, n_max]에서 균등하게 뽑고
t−1 시점 투자 가능 자산 중 n개를 비복원 추출합니다.
"""
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError, LeakageError
from panel.models import FilterConfig, PanelStore, ReturnPanel
from panel.universe import filter_universe
from .schemas import TrainConfig, TrainSample

logger = logging.getLogger(__name__)

MAX_DRAW_ATTEMPTS = 100


def calibration_rows(panel: ReturnPanel, config: TrainConfig) -> Tuple[int, int]:
    """보정 구간 [start, stop) 행 위치"""
    start, stop = 0, panel.n_days
    if config.calibration_start is not None:
        start = int(panel.dates.searchsorted(pd.Timestamp(config.calibration_start), side='left'))
    if config.calibration_end is not None:
        stop = int(panel.dates.searchsorted(pd.Timestamp(config.calibration_end), side='right'))
    return start, stop


class SampleDrawer:
    """
    보정 구간 안의 학습/검증 표본 추출기

    Args:
        panel: 수익률 패널
        config: 학습 설정
        store: 원천 레코드 (use_universe_filter일 때 필요)
        filter_config: 유니버스 필터 설정
    """

    def __init__(self, panel: ReturnPanel, config: TrainConfig, store: Optional[PanelStore] = None,
                 filter_config: Optional[FilterConfig] = None):
        self.panel = panel
        self.config = config
        self.store = store
        self.filter_config = filter_config
        self.start, self.stop = calibration_rows(panel, config)
        # 결정일 t의 가능 범위: t − Δt_in ≥ start, t + Δt_out ≤ stop − 1
        self.t_min = self.start + config.dt_in
        self.t_max = self.stop - 1 - config.dt_out
        if self.t_max < self.t_min:
            raise DataValidationError(
                f"보정 구간 {self.stop - self.start}일이 Δt_in + Δt_out + 1 = "
                f"{config.dt_in + config.dt_out + 1}일보다 짧습니다"
            )
        self._universe_cache: Dict[int, np.ndarray] = {}

        # 검증 결정일은 보정 구간 마지막 validation_days 안, 학습 OOS 윈도우는 그 앞에서 끝남
        self.validation_t_min = min(max(self.t_min, self.stop - config.validation_days), self.t_max)
        self.training_t_max = self.validation_t_min - 1 - config.dt_out
        if self.training_t_max < self.t_min:
            logger.warning("보정 구간이 짧아 학습/검증 결정일 구간을 분리하지 못했습니다")
            self.training_t_max = self.t_max

    def candidates(self, t: int) -> np.ndarray:
        """t 결정 시점 투자 가능 자산 (입력·OOS 윈도우 결측 없음)"""
        complete = self.panel.complete_assets(t - self.config.dt_in, self.oos_stop(t))
        if not self.config.use_universe_filter:
            return complete
        if self.store is None:
            raise DataValidationError("유니버스 필터에는 원천 레코드가 필요합니다")
        if t not in self._universe_cache:
            selection = filter_universe(self.store, self.panel.dates[t], len(self.store.assets), self.filter_config)
            allowed = self.panel.asset_index(selection.assets)
            self._universe_cache[t] = np.intersect1d(complete, allowed)
        return self._universe_cache[t]

    def oos_stop(self, t: int) -> int:
        return t + 1 + self.config.dt_out

    def build(self, t: int, columns: np.ndarray) -> TrainSample:
        """t와 자산 열로 표본 구성 (보정 구간 이탈 시 LeakageError)"""
        lo, hi = t - self.config.dt_in, self.oos_stop(t)
        if lo < self.start or hi > self.stop:
            raise LeakageError(
                f"표본 윈도우 [{lo}, {hi})가 보정 구간 [{self.start}, {self.stop})을 벗어납니다"
            )
        columns = np.sort(np.asarray(columns, dtype=int))
        return TrainSample(
            t=t,
            columns=columns,
            window=self.panel.window(lo, t, columns),
            oos=self.panel.window(t + 1, hi, columns),
            decision_date=self.panel.dates[t].date(),
        )

    def draw(self, rng: np.random.Generator, t_range: Optional[Tuple[int, int]] = None) -> TrainSample:
        """
        표본 하나 추출

        n은 한 번만 뽑고, 투자 가능 자산이 n개 미만인 결정일만 다시 뽑습니다.
        """
        t_lo, t_hi = t_range or (self.t_min, self.t_max)
        n = int(rng.integers(self.config.n_min, self.config.n_max + 1))
        for _ in range(MAX_DRAW_ATTEMPTS):
            t = int(rng.integers(t_lo, t_hi + 1))
            pool = self.candidates(t)
            if pool.size >= n:
                return self.build(t, rng.choice(pool, size=n, replace=False))
        raise DataValidationError(
            f"{MAX_DRAW_ATTEMPTS}회 시도에도 자산 {n}개 표본을 만들지 못했습니다",
            details={"n": n, "n_min": self.config.n_min, "n_max": self.config.n_max},
        )

    def draw_training(self, rng: np.random.Generator) -> TrainSample:
        return self.draw(rng, (self.t_min, self.training_t_max))

    def validation_set(self, rng: np.random.Generator) -> List[TrainSample]:
        """보정 구간 마지막 구간에서 한 번 뽑는 고정 검증 표본"""
        return [self.draw(rng, (self.validation_t_min, self.t_max)) for _ in range(self.config.validation_samples)]


def draw_sample(panel: ReturnPanel, config: TrainConfig, rng: np.random.Generator,
                store: Optional[PanelStore] = None) -> TrainSample:
    """보정 구간 전체에서 표본 하나 추출"""
    return SampleDrawer(panel, config, store).draw(rng)
