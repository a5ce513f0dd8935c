"""시뮬레이션 Celery 태스크"""
from pathlib import Path
from typing import Optional
import logging

from pydantic import ValidationError

from backtest.strategies import strategy_for_market
from config.celery import app
from config.exceptions import GmvError, handle_exception
from estimators.models import CleanConfig
from panel.models import FilterConfig, SyntheticMarketSpec
from panel.sources import load_market
from .models import CASH_STRATEGY, FeeSchedule, SimulationConfig, from_micro
from .simulator import run_simulation, write_simulation_report

logger = logging.getLogger(__name__)


@app.task(bind=True)
def simulate_task(self, config: dict, output_dir: Optional[str] = None, data: Optional[str] = None,
                  synth: Optional[dict] = None, fees: Optional[dict] = None, clean: Optional[dict] = None,
                  filter_config: Optional[dict] = None):
    """
    계좌 시뮬레이션 태스크

    Returns:
        {'status': 'success', 'final_nlv', 'costs', 'metrics', 'files'}
    """
    try:
        sim_config = SimulationConfig(**config)
        fee_schedule = FeeSchedule(**(fees or {}))
        market = load_market(data, SyntheticMarketSpec(**(synth or {})))
        strategy = None if sim_config.strategy == CASH_STRATEGY else strategy_for_market(
            sim_config, market, CleanConfig(**(clean or {})),
        )
        result = run_simulation(
            sim_config, market.store, strategy, fee_schedule,
            filter_config=FilterConfig(**filter_config) if filter_config else None,
        )
        files = write_simulation_report(result, Path(output_dir)) if output_dir else []
        costs = {k: from_micro(v) for k, v in result.costs().items()}
        metrics = result.report.replications.iloc[0].to_dict() if result.report is not None else {}
        logger.info(f"시뮬레이션 태스크 완료: 최종 NLV {result.nlv.iloc[-1]:,.2f}")
        return {
            'status': 'success',
            'final_nlv': float(result.nlv.iloc[-1]),
            'costs': costs,
            'metrics': {k: (v.isoformat() if hasattr(v, 'isoformat') else v) for k, v in metrics.items()},
            'files': [str(p) for p in files],
        }
    except (GmvError, ValidationError) as e:
        return handle_exception(e)
