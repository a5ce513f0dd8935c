from .assembly import (
    PortfolioWeights, PrecisionEstimate, SpectralDecomp, WeightConstraint,
    assemble_precision, benchmark_covariance, eigen_weight_decomposition, gmv_loss,
    gmv_weights, marginal_std, project_eigvecs, sample_correlation,
)
from .qp import QpResult, gmv_weights_longonly, kkt_residuals
from .inflation import predicted_inflation, variance_inflation_mc
