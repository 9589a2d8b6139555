"""Spot covariance estimation by Fourier-Fejer inversion of increment moments."""

from .core import SampledPath, SymMatrixPath, TimeGrid
from .errors import CovFourierError, NumericalError, ValidationError
from .fourier import (
    ClampPolicy,
    FourierCoefficients,
    GFunctionSpec,
    GKind,
    SpotEstimate,
    estimate_spot_covariance,
    fejer_kernel,
    fejer_reconstruct,
    fourier_coefficients,
    rho_g,
    rho_g_inverse,
    rho_gg,
    select_mode_count,
)
from .simulator import BatesParams, simulate_bates, simulate_bates_batch
from .second_pass import ParamEstimate, SecondPassConfig, estimate_parameters
from .baseline import local_spot_estimator, james_stein_shrink

__all__ = [
    "BatesParams", "ClampPolicy", "CovFourierError", "FourierCoefficients", "GFunctionSpec", "GKind",
    "NumericalError", "ParamEstimate", "SampledPath", "SecondPassConfig", "SpotEstimate", "SymMatrixPath",
    "TimeGrid", "ValidationError", "estimate_parameters", "estimate_spot_covariance", "fejer_kernel",
    "fejer_reconstruct", "fourier_coefficients", "james_stein_shrink", "local_spot_estimator", "rho_g",
    "rho_g_inverse", "rho_gg", "select_mode_count", "simulate_bates", "simulate_bates_batch",
]
