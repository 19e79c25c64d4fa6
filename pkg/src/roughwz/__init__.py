"""Stochastic numerics for piecewise-linear approximations of
fractional-noise-driven systems: exact fBM sampling, iterated-integral
lifts with p-variation analytics, variational and Malliavin calculus
along solutions, mollified density estimation, and convergence studies.
"""

from ._backend import BACKEND
from .errors import (ConfigurationError, EmbeddingError,
                     InconclusiveStudyError, IntegrationFailureError,
                     NumericalError, OracleUnavailableError,
                     RefinementError, RoughWZError, UnsupportedLevelError)
from .fbm import (IncrementGram, PathEnsemble, SamplePath, TimeGrid,
                  fbm_covariance, increment_gram, interpolate_to,
                  require_lift_regime, restrict_to_partition, sample_fbm,
                  validate_hurst)
from .roughpath import (RoughPathLevels, chen_defect, dilate,
                        homogeneous_pvar_norm, intrinsic_control,
                        levy_area_running, lift_between,
                        lift_piecewise_linear, n_functional, pvar_distance,
                        pvar_seminorm, shuffle_defect,
                        level3_consistency_check)
from .vectorfields import VectorFieldModel, check_model_derivatives, model_preset
from .ode import (BatchSolution, SolvedSystem, evaluate_solution_sup_distance,
                  solve_driven, solve_driven_batch, solve_values_at)
from .malliavin import (DerivativePath, MalliavinCovariance,
                        covariance_samples, directional_derivative,
                        malliavin_covariance, nondegeneracy_report)
from .density import (DensityEstimate, affine_gaussian_moments, bandwidth,
                      default_delta, estimate_density, gaussian_kernel,
                      reference_density, sup_error)
from .experiments import (ConvergenceReport, RateFit, StudyConfig, fit_rate,
                          run_density_study, run_lift_study, run_nfunc_stats,
                          run_pathwise_study, run_study)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    # errors
    "RoughWZError", "ConfigurationError", "RefinementError",
    "UnsupportedLevelError", "NumericalError", "EmbeddingError",
    "IntegrationFailureError", "OracleUnavailableError",
    "InconclusiveStudyError",
    # fbm
    "TimeGrid", "SamplePath", "PathEnsemble", "IncrementGram",
    "fbm_covariance", "increment_gram", "sample_fbm", "validate_hurst",
    "require_lift_regime", "restrict_to_partition", "interpolate_to",
    # rough paths
    "RoughPathLevels", "lift_piecewise_linear", "levy_area_running",
    "pvar_seminorm", "intrinsic_control", "homogeneous_pvar_norm",
    "pvar_distance", "n_functional", "dilate", "chen_defect",
    "shuffle_defect", "lift_between", "level3_consistency_check",
    # models and solver
    "VectorFieldModel", "model_preset", "check_model_derivatives",
    "SolvedSystem", "BatchSolution", "solve_driven", "solve_driven_batch",
    "solve_values_at", "evaluate_solution_sup_distance",
    # derivatives
    "DerivativePath", "MalliavinCovariance", "covariance_samples",
    "directional_derivative", "malliavin_covariance", "nondegeneracy_report",
    # density
    "DensityEstimate", "gaussian_kernel", "bandwidth", "default_delta",
    "estimate_density", "reference_density", "affine_gaussian_moments",
    "sup_error",
    # studies
    "StudyConfig", "RateFit", "ConvergenceReport", "fit_rate",
    "run_pathwise_study", "run_lift_study", "run_density_study",
    "run_nfunc_stats", "run_study",
]
