"""rotagrid: rotated-coordinate preprocessing for adaptive sparse-grid
least-squares regression.

The package learns regressors in three steps: a total-degree polynomial
surrogate captures the rough variance structure of the data, a conjugate
gradient search over the Stiefel manifold finds the orthonormal frame that
concentrates that variance on the leading rotated coordinates, and an
adaptive sparse grid is fitted to the CDF-rescaled rotated data. A FastAPI
service (rotagrid.service) exposes the pipeline; the CLI (rotagrid.cli) is a
thin client of that service.
"""

from .anova import (
    ObjectiveEvaluator,
    WeightScheme,
    d_u,
    gaussian_moment,
    mean_dimension,
    mean_value,
    objective,
    sensitivity,
    sigma_sq_u,
    total_variance,
)
from .datasets import (
    Dataset,
    generate_ridge_2d,
    generate_ridge_5d,
    load_csv,
    save_csv,
    train_test_split,
)
from .errors import RotagridError
from .pipeline import (
    FittedModel,
    PipelineConfig,
    RunTrace,
    gaussian_cdf,
    load_model,
    model_from_text,
    model_to_text,
    nrmse,
    run_pipeline,
    save_model,
    sweep,
    transform_dataset,
)
from .polynomials import Polynomial, compose_polynomial, enumerate_total_degree
from .rotation import (
    LineSearchConfig,
    OptimizerConfig,
    fd_gradient,
    line_search,
    optimize,
    parallel_transport,
    random_stiefel,
    retract,
)
from .sparse_grid import (
    AdaptiveGrid,
    BasisKey,
    FitConfig,
    adaptive_fit,
    assemble_design,
    basis_1d,
    basis_eval,
    compress,
    error_indicator,
    evaluate,
    evaluate_many,
    grid_from_text,
    grid_to_text,
    refine,
    regular_grid,
    solve_ls,
)
from .surrogate import build_vandermonde, fit_polynomial

__version__ = "0.1.0"

__all__ = [
    "AdaptiveGrid",
    "BasisKey",
    "Dataset",
    "FitConfig",
    "FittedModel",
    "LineSearchConfig",
    "ObjectiveEvaluator",
    "OptimizerConfig",
    "PipelineConfig",
    "Polynomial",
    "RotagridError",
    "RunTrace",
    "WeightScheme",
    "adaptive_fit",
    "assemble_design",
    "basis_1d",
    "basis_eval",
    "build_vandermonde",
    "compose_polynomial",
    "compress",
    "d_u",
    "enumerate_total_degree",
    "error_indicator",
    "evaluate",
    "evaluate_many",
    "fd_gradient",
    "fit_polynomial",
    "gaussian_cdf",
    "gaussian_moment",
    "generate_ridge_2d",
    "generate_ridge_5d",
    "grid_from_text",
    "grid_to_text",
    "line_search",
    "load_csv",
    "load_model",
    "mean_dimension",
    "mean_value",
    "model_from_text",
    "model_to_text",
    "nrmse",
    "objective",
    "optimize",
    "parallel_transport",
    "random_stiefel",
    "refine",
    "regular_grid",
    "retract",
    "run_pipeline",
    "save_csv",
    "save_model",
    "sensitivity",
    "sigma_sq_u",
    "solve_ls",
    "sweep",
    "total_variance",
    "train_test_split",
    "transform_dataset",
]
