from .models import (
    CASH_STRATEGY, COST_CATEGORIES, MICRO, AccountState, DayFlows, FeeSchedule, SimulationConfig, Trade,
    from_micro, round_half_away, to_micro,
)
from .rates import ReferenceRates
from .account import (
    accrue_daily, estimate_prices, execute, liquidate_delisted, rebalance, split_adjusted_close, target_shares,
)
from .simulator import SimulationResult, Simulator, run_simulation, write_simulation_report
