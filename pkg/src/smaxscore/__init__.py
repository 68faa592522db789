"""Distributed estimation and inference for semi-parametric binary response
models via kernel-smoothed maximum score."""

__version__ = "0.1.0"

from .data import Dataset, Observation, read_csv, write_csv
from .kernel import KernelSpec, biweight_integral_kernel, kernel_constants, verify_order
from .objective import (
    Moments,
    newton_moments,
    score_objective,
    smoothed_gradient,
    smoothed_hessian,
    smoothed_objective,
)
from .local_solver import (
    SolveOptions,
    SolverError,
    initial_estimator,
    solve_local_smse,
    solve_mse_grid_1d,
)
from .distributed import (
    EstimatorTrace,
    ScheduleConfig,
    Shard,
    aggregate,
    avg_mse,
    avg_smse,
    bandwidth_schedule,
    local_moments,
    msmse,
    num_iterations,
    optimal_weights,
    partition,
    weighted_avg_smse,
    weighted_msmse,
    write_trace_csv,
)
from .inference import (
    InferenceReport,
    NuisanceEstimates,
    avg_mse_interval,
    confidence_interval,
    estimate_nuisances,
    msmse_plugin_lambda,
    normal_quantile,
    optimal_lambda,
)
from .highdim import (
    DantzigProblem,
    HdConfig,
    default_h_star,
    hd_msmse,
    hessian_vector_product,
    lambda_schedule,
    solve_dantzig,
)
from .simlab import (
    DesignConfig,
    MetricsRow,
    NoiseSpec,
    coverage_rate,
    generate,
    run_monte_carlo,
)
from .estimators import (
    AverageMaxScore1D,
    AverageSmoothedMaxScore,
    GridMaxScore1D,
    MultiRoundSmoothedMaxScore,
    SmoothedMaxScore,
    SparseMultiRoundSmoothedMaxScore,
)

__all__ = [
    "Dataset", "Observation", "read_csv", "write_csv",
    "KernelSpec", "biweight_integral_kernel", "kernel_constants", "verify_order",
    "Moments", "score_objective", "smoothed_objective", "smoothed_gradient",
    "smoothed_hessian", "newton_moments",
    "SolveOptions", "SolverError", "solve_local_smse", "solve_mse_grid_1d",
    "initial_estimator",
    "Shard", "ScheduleConfig", "EstimatorTrace", "partition", "local_moments",
    "aggregate", "bandwidth_schedule", "num_iterations", "avg_smse", "avg_mse",
    "msmse", "weighted_avg_smse", "weighted_msmse", "optimal_weights",
    "write_trace_csv",
    "NuisanceEstimates", "InferenceReport", "estimate_nuisances",
    "optimal_lambda", "confidence_interval", "avg_mse_interval",
    "normal_quantile", "msmse_plugin_lambda",
    "DantzigProblem", "HdConfig", "hessian_vector_product", "solve_dantzig",
    "lambda_schedule", "hd_msmse", "default_h_star",
    "NoiseSpec", "DesignConfig", "MetricsRow", "generate", "run_monte_carlo",
    "coverage_rate",
    "SmoothedMaxScore", "GridMaxScore1D", "AverageSmoothedMaxScore",
    "AverageMaxScore1D", "MultiRoundSmoothedMaxScore",
    "SparseMultiRoundSmoothedMaxScore",
]
