"""수익률 패널 공급원 (CSV 수집 또는 합성 시장)"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union
import logging

import numpy as np

from .ingest import ingest_csv
from .models import PanelStore, ReturnPanel, SyntheticMarketSpec
from .synthetic import build_synthetic_store, generate_synthetic

logger = logging.getLogger(__name__)


@dataclass
class MarketData:
    """수익률 패널과 원천 레코드 (합성이면 모집단 공분산 포함)"""
    panel: ReturnPanel
    store: PanelStore
    population: Optional[np.ndarray] = None

    @property
    def is_synthetic(self) -> bool:
        return self.population is not None


def load_market(data: Optional[Union[str, Path]] = None, synth: Optional[SyntheticMarketSpec] = None) -> MarketData:
    """
    CSV 경로가 있으면 수집하고, 없으면 합성 시장을 생성합니다.
    """
    if data is not None:
        panel, store = ingest_csv(data)
        logger.info(f"CSV 수집: {data} ({panel.n_days}일 × {panel.n_assets}자산)")
        return MarketData(panel=panel, store=store)
    spec = synth or SyntheticMarketSpec()
    panel, population = generate_synthetic(spec)
    store = build_synthetic_store(spec, panel)
    logger.info(f"합성 시장 생성: {panel.n_days}일 × {panel.n_assets}자산, 팩터 {spec.n_factors}개")
    return MarketData(panel=panel, store=store, population=population)
