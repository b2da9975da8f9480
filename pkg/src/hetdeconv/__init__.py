"""Partial deconvolution kernel regression under heteroscedastic measurement error."""

from .error_models import (
    DENOMINATOR_FLOOR,
    ErrorEnsemble,
    ErrorFamily,
    ErrorModel,
    ValidationReport,
    validate_ensemble,
)
from .estimators import (
    Bandwidths,
    DeconvEstimator,
    Sample,
    fit,
    linear_slope,
    naive_regression,
    naive_regression_grid,
    partial_linear,
    partial_linear_grid,
    variance_bound_diagnostic,
)
from .exceptions import (
    AllPointsExcluded,
    ConfigError,
    DegenerateDenominator,
    DegenerateDesign,
    DimensionMismatch,
    EnsembleInvalid,
    HetdeconvError,
)
from .kernels import (
    DeconvWeights,
    QuadratureGrid,
    QuadratureRule,
    bandlimited_kernel,
    bandlimited_kernel_closed_form,
    bandlimited_kernel_ft,
    build_deconv_weights,
    deconv_kernel,
    deconv_kernel_grid,
    gaussian_kernel,
)
from .simulation import (
    AseReport,
    GeneratedData,
    GridAxis,
    Model,
    SimulationConfig,
    ase,
    bandwidth_search,
    build_ensemble,
    cross_section,
    generate,
    replication_rng,
    run_replications,
    true_regression,
)

__version__ = "0.1.0"

__all__ = [
    "AllPointsExcluded",
    "AseReport",
    "Bandwidths",
    "ConfigError",
    "DeconvEstimator",
    "DeconvWeights",
    "DegenerateDenominator",
    "DegenerateDesign",
    "DENOMINATOR_FLOOR",
    "DimensionMismatch",
    "EnsembleInvalid",
    "ErrorEnsemble",
    "ErrorFamily",
    "ErrorModel",
    "GeneratedData",
    "GridAxis",
    "HetdeconvError",
    "Model",
    "QuadratureGrid",
    "QuadratureRule",
    "Sample",
    "SimulationConfig",
    "ValidationReport",
    "ase",
    "bandlimited_kernel",
    "bandlimited_kernel_closed_form",
    "bandlimited_kernel_ft",
    "bandwidth_search",
    "build_deconv_weights",
    "build_ensemble",
    "cross_section",
    "deconv_kernel",
    "deconv_kernel_grid",
    "fit",
    "gaussian_kernel",
    "generate",
    "linear_slope",
    "naive_regression",
    "naive_regression_grid",
    "partial_linear",
    "partial_linear_grid",
    "replication_rng",
    "run_replications",
    "true_regression",
    "validate_ensemble",
    "variance_bound_diagnostic",
]
