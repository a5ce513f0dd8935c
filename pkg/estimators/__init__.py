from .models import AoTable, CleanConfig, CleanerTag
from .cleaners import (
    bistochastic_overlap, clean_ls, clean_mle, clean_pm, clean_qis, clip_eigenvalues,
    correlation_matrix, marchenko_pastur_edge, oracle_correlation, oracle_eigenvalues, reassemble,
)
from .average_oracle import calibrate_ao, clean_ao, window_oracle
from .univariate import erb_weights, mcw_weights
from .dispatch import clean_correlation, estimate_covariance, spectrum_map
