"""Time-varying sparse Gaussian graphical model estimation.

Local group-penalized estimation of a smoothly varying precision matrix:
kernel-smoothed covariances, exact blockwise screening, ADMM solvers for
the likelihood and pseudo-likelihood objectives, constrained-MLE
refitting, and cross-validated parameter selection.
"""

__version__ = "0.1.0"

from .dataset import (TimeGrid, TimeSeriesDataset, detrend, load_csv,
                      log_returns, standardize)
from .errors import (ConvergenceError, DataError, DegenerateColumnError,
                     EmptyWindowError, GenerationError, ParameterError,
                     TvggmError)
from .kernels import (KernelSpec, Neighborhood, SmoothedMatrixSequence,
                      build_neighborhood, kernel_weights,
                      smoothed_covariances, to_correlation)
from .likelihood import (AdmmSettings, PrecisionSequence, admm_likelihood,
                         eigen_prox, group_soft_threshold, kkt_residual)
from .pseudo import (RegressionCoefficients, admm_pseudo, beta_update,
                     cholesky_delete, paired_group_soft_threshold)
from .oracle import (objective_likelihood, objective_pseudo, oracle_solve)
from .refit import EdgeSet, refit_mle
from .screening import (BlockPartition, connected_components,
                        screen_adjacency, solve_blockwise)
from .simulate import (MetricsReport, SimulationModel, compute_metrics,
                       sample_observations, simulate_time_invariant,
                       simulate_time_varying)
from .tuning import (CvResult, TuningGrid, cv_score, cv_vote,
                     grid_search_schedule, make_folds, select_parameters,
                     validation_bandwidth)
from .pipeline import FitConfig, GraphPath, fit_path, fit_with_tuning

__all__ = [name for name in dir() if not name.startswith("_")]
