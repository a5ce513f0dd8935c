"""백테스트 Celery 태스크"""
from typing import Optional
import logging

from pydantic import ValidationError

from config.celery import app
from config.exceptions import GmvError, handle_exception
from estimators.models import CleanConfig
from panel.models import SyntheticMarketSpec
from panel.sources import load_market
from .engine import ReplicationRunner
from .models import BacktestConfig
from .strategies import strategy_for_market

logger = logging.getLogger(__name__)


@app.task(bind=True)
def run_replication_task(self, config: dict, replication: int, data: Optional[str] = None,
                         synth: Optional[dict] = None, clean: Optional[dict] = None):
    """
    복제 하나 실행

    Args:
        config: BacktestConfig 필드 dict
        replication: 복제 번호 (하위 시드)
        data: 수집 CSV 경로 (없으면 합성 시장)
        synth: SyntheticMarketSpec 필드 dict
        clean: CleanConfig 필드 dict

    Returns:
        {'status': 'success', 'replication', 'start_date', 'metrics'}
    """
    try:
        backtest_config = BacktestConfig(**config)
        clean_config = CleanConfig(**(clean or {}))
        market = load_market(data, SyntheticMarketSpec(**(synth or {})))
        strategy = strategy_for_market(backtest_config, market, clean_config)
        result = ReplicationRunner(market.panel, backtest_config, strategy).run(replication)
        logger.info(f"복제 {replication} 완료: 손실 {result.metrics['loss']:.6f}")
        return {
            'status': 'success',
            'replication': replication,
            'start_date': result.start_date.isoformat(),
            'metrics': result.metrics,
        }
    except (GmvError, ValidationError) as e:
        return handle_exception(e)
