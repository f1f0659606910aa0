"""Simulation toolkit for the fractional Hardy-Henon heat equation driven by fractional Brownian noise."""
from .fbm import (
    CapabilityError,
    FbmPath,
    TimeGrid,
    c_h,
    fbm_covariance,
    fbm_inner_product,
    sample_fbm_cholesky,
    sample_fbm_volterra,
    volterra_kernel,
)
from .hardy import apply_S, build_hardy_weight, nonlinearity, verify_hardy_estimate
from .noise import NoiseSpec, mode_convolution_covariance, sample_stochastic_convolution
from .solver import SolverConfig, SolutionTrajectory, duhamel_quadrature, metric_d, picard_solve
from .spectral import (
    Field,
    SpatialGrid,
    apply_semigroup,
    eval_Ktheta,
    kappa_m,
    lebesgue_norm,
    smoothing_constant,
    verify_smoothing,
)
from .wellposedness import (
    ModelParams,
    beta_function,
    check_admissible,
    default_r,
    existence_budget,
    exponents,
)

__all__ = [
    "CapabilityError",
    "FbmPath",
    "Field",
    "ModelParams",
    "NoiseSpec",
    "SolutionTrajectory",
    "SolverConfig",
    "SpatialGrid",
    "TimeGrid",
    "apply_S",
    "apply_semigroup",
    "beta_function",
    "build_hardy_weight",
    "c_h",
    "check_admissible",
    "default_r",
    "duhamel_quadrature",
    "eval_Ktheta",
    "existence_budget",
    "exponents",
    "fbm_covariance",
    "fbm_inner_product",
    "kappa_m",
    "lebesgue_norm",
    "metric_d",
    "mode_convolution_covariance",
    "nonlinearity",
    "picard_solve",
    "sample_fbm_cholesky",
    "sample_fbm_volterra",
    "sample_stochastic_convolution",
    "smoothing_constant",
    "verify_hardy_estimate",
    "verify_smoothing",
    "volterra_kernel",
]
