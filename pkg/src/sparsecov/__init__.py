"""Covariance and functional PCA estimation from sparsified node vectors.

Estimators: the sample baseline, Random-knots, Random-knots-Spatial,
B-spline and Bspline-Spatial, together with AIC knot selection, quadrature
FPCA and a reproducible simulation harness.
"""

from .bspline import (KnotVector, SplineBasis, bspline_cov, bspline_mean, bspline_spatial,
                      design_matrix, eval_basis, fit_batch, fit_coefficients, make_basis,
                      make_knots, smoother_matrix, sparse_positions)
from .core import frobenius_mse, grid, mean_mse, sample_cov, sample_mean, sup_error
from .fpca import (EigenSystem, align_and_loss, eigendecompose, eigenspace_groups,
                   eigenspace_loss, fpc_scores, truncate_fve)
from .random_knots import (CorrelationEnergy, SpatialConstants, SpatialScaler, beta_bar,
                           closed_mse_rk, closed_mse_rks, correlation_energy, custom_scaler,
                           exact_mean_rks_cov, exact_mse_rks, rk_cov, rk_mean, rks_cov, rks_mean,
                           spatial_constants, t_avg, t_optimal, unit_scaler)
from .selection import KnotSelection, SelectionMethod, aic_value, candidate_pool, select_knots
from .simbench import (Dataset, ExperimentConfig, GeneratorSpec, amse_cov, amse_eigenspace,
                       amse_eigensystem, generate_dataset, run_experiment, true_eigensystem)
from .sparsify import (Scheme, SparseBatch, bernoulli_sparsify, coverage_counts, fixed_positions,
                       fixed_sparsify, from_mask)

__version__ = "0.1.0"
