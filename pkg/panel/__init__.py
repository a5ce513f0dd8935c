from .models import (
    AssetDayRecord, FilterConfig, InnovationLaw, PanelStore, ReturnPanel,
    SyntheticMarketSpec, UniverseSelection,
)
from .ingest import ingest_csv
from .synthetic import FactorModel, build_factor_model, build_synthetic_store, generate_synthetic
from .universe import filter_universe, low_variance_outlier_mask
from .sources import MarketData, load_market

__all__ = (
    'AssetDayRecord', 'FilterConfig', 'InnovationLaw', 'PanelStore', 'ReturnPanel',
    'SyntheticMarketSpec', 'UniverseSelection', 'ingest_csv', 'FactorModel', 'build_factor_model',
    'build_synthetic_store', 'generate_synthetic', 'filter_universe', 'low_variance_outlier_mask',
    'MarketData', 'load_market',
)
