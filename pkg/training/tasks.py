"""학습 Celery 태스크"""
from pathlib import Path
from typing import Optional
import logging

from pydantic import ValidationError

from config.celery import app
from config.exceptions import GmvError, handle_exception
from panel.models import SyntheticMarketSpec
from panel.sources import load_market
from .checkpoint import save_checkpoint
from .schemas import TrainConfig
from .trainer import train

logger = logging.getLogger(__name__)


@app.task(bind=True)
def train_task(self, config: dict, output: str, data: Optional[str] = None, synth: Optional[dict] = None):
    """
    학습 태스크

    Args:
        config: TrainConfig 필드 dict
        output: 체크포인트 경로
        data: 수집 CSV 경로 (없으면 합성 시장)
        synth: SyntheticMarketSpec 필드 dict
    """
    try:
        train_config = TrainConfig(**config)
        market = load_market(data, SyntheticMarketSpec(**(synth or {})))
        result = train(market.panel, train_config, market.store)
        path = save_checkpoint(result.checkpoint, Path(output))
        history = [vars(r) for r in result.history]
        logger.info(f"학습 태스크 완료: {path}")
        return {'status': 'success', 'checkpoint': str(path), 'history': history}
    except (GmvError, ValidationError) as e:
        return handle_exception(e)
