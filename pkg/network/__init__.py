from .lag import LagTransform, half_mass_lag, inverse_softplus
from .lstm import BiLstmCleaner, lstm_cell, param_count
from .vol_mlp import VolatilityMlp, mlp_param_count
from .model import GmvNetwork, NetworkOutput, ensemble_precision
from .diagnostics import spectrum_stability_report
