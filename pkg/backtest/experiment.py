"""
모집단 공분산을 아는 합성 팩터 시장에서의 추정기 비교

시행마다 새 팩터 모델을 뽑아 Δt_in일 표본으로 가중치를 만들고
모집단 Σ 기준 OOS 분산 wᵀΣw와 Δt_out일 실현 손실을 기록합니다.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from config.exceptions import ConfigError
from config.seeds import STREAM_EXPERIMENT, make_rng
from estimators.dispatch import estimate_covariance
from estimators.models import CleanConfig, CleanerTag
from network.model import GmvNetwork, ensemble_precision
from panel.models import SyntheticMarketSpec
from panel.synthetic import FactorModel, build_factor_model
from portfolio.assembly import gmv_loss, gmv_weights
from .metrics import paired_bootstrap

logger = logging.getLogger(__name__)

NN_COLUMN = "NN"


class ExperimentConfig(BaseModel):
    """추정기 비교 실험 설정"""
    model_config = ConfigDict(extra='forbid')

    n: int = Field(50, ge=2, description="자산 수", json_schema_extra={"provenance": "design"})
    dt_in: int = Field(200, ge=3, description="표본 일수", json_schema_extra={"provenance": "design"})
    dt_out: int = Field(5, ge=1, description="실현 손실 일수", json_schema_extra={"provenance": "paper"})
    trials: int = Field(200, ge=2, description="시행 수", json_schema_extra={"provenance": "design"})
    tags: List[CleanerTag] = Field(
        default_factory=lambda: [CleanerTag.MLE, CleanerTag.LS, CleanerTag.QIS, CleanerTag.ORACLE],
        description="비교 추정기", json_schema_extra={"provenance": "design"},
    )
    n_factors: int = Field(3, ge=0, description="팩터 수", json_schema_extra={"provenance": "design"})
    seed: int = Field(0, description="난수 시드", json_schema_extra={"provenance": "design"})


@dataclass
class ExperimentResult:
    """시행 × 추정기 표"""
    variances: pd.DataFrame
    losses: pd.DataFrame
    comparisons: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'oos_variance': self.variances.mean(axis=0),
            'loss': self.losses.mean(axis=0),
        })


def draw_returns(model: FactorModel, rng: np.random.Generator, days: int) -> np.ndarray:
    """가우시안 팩터 모델 표본 (days × n)"""
    k = model.loadings.shape[1]
    factors = rng.standard_normal((days, k))
    noise = rng.standard_normal((days, model.idio_vol.size)) * model.idio_vol
    return factors @ model.loadings.T + noise


def population_correlation(cov: np.ndarray) -> np.ndarray:
    std = np.sqrt(np.diag(cov))
    return cov / np.outer(std, std)


def compare_estimators(config: ExperimentConfig, networks: Optional[Sequence[GmvNetwork]] = None,
                       clean: Optional[CleanConfig] = None) -> ExperimentResult:
    """
    추정기 비교 실행

    Args:
        config: 실험 설정
        networks: 함께 비교할 학습된 네트워크 앙상블 (열 이름 NN)
        clean: 정제 파라미터 (tag는 시행마다 덮어씀)

    Returns:
        ExperimentResult (MLE 대비 쌍 부트스트랩 포함)
    """
    if networks:
        dt_in = {net.dt_in for net in networks}
        if dt_in != {config.dt_in}:
            raise ConfigError(f"네트워크 Δt_in {sorted(dt_in)}이 실험 dt_in={config.dt_in}과 다릅니다")
    base = clean or CleanConfig()
    spec = SyntheticMarketSpec(n_assets=config.n, n_factors=config.n_factors, seed=config.seed)
    columns = [tag.value for tag in config.tags] + ([NN_COLUMN] if networks else [])
    variances = np.empty((config.trials, len(columns)))
    losses = np.empty((config.trials, len(columns)))

    for trial in range(config.trials):
        rng = make_rng(config.seed, STREAM_EXPERIMENT, trial)
        model = build_factor_model(spec, rng)
        sigma = model.population_cov
        window = draw_returns(model, rng, config.dt_in)
        oos = draw_returns(model, rng, config.dt_out)
        reference = population_correlation(sigma)

        for j, column in enumerate(columns):
            if column == NN_COLUMN:
                precision = ensemble_precision(networks, window)
            else:
                tag = CleanerTag(column)
                cov = estimate_covariance(
                    window, base.model_copy(update={'tag': tag}),
                    reference=reference if tag == CleanerTag.ORACLE else None,
                )
                precision = np.linalg.inv(cov)
            w = gmv_weights(precision).data
            variances[trial, j] = float(w @ sigma @ w)
            losses[trial, j] = gmv_loss(w, oos).item()

    result = ExperimentResult(
        variances=pd.DataFrame(variances, columns=columns),
        losses=pd.DataFrame(losses, columns=columns),
    )
    if CleanerTag.MLE.value in columns:
        for column in columns:
            if column != CleanerTag.MLE.value:
                result.comparisons[column] = paired_bootstrap(
                    result.losses[column], result.losses[CleanerTag.MLE.value], seed=config.seed,
                )
    summary = ', '.join(f"{c} {v:.3e}" for c, v in result.variances.mean(axis=0).items())
    logger.info(f"추정기 비교 완료 ({config.trials}회, n={config.n}, Δt_in={config.dt_in}): {summary}")
    return result
