from .models import (
    METRIC_COLUMNS, NN_STRATEGY, STRATEGIES, BacktestConfig, BacktestReport, ReplicationResult,
)
from .metrics import (
    TRADING_DAYS, compute_metrics, max_drawdown, max_drawdown_by_year, paired_bootstrap, turnover,
)
from .strategies import (
    Strategy, build_strategy, strategy_for_market, weights_from_covariance, weights_from_precision,
)
from .engine import ReplicationRunner, drift, run_frictionless, run_replications, start_range
from .experiment import ExperimentConfig, ExperimentResult, compare_estimators
from .reports import write_backtest_report, write_workbook
