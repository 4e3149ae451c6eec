"""Windowed quasi-periodic Helmholtz Green functions and grating scattering.

The package computes the Green function of the 3D Helmholtz equation that is
quasi-periodic with respect to a 2D lattice, by smooth windowed truncation of
the lattice sum, including the vertically shifted combination that restores
convergence at anomaly (grazing-mode) frequencies.  On top of the kernels it
provides a Nystrom discretization of the combined-field integral equation for
plane-wave scattering by doubly periodic gratings, Rayleigh amplitude
extraction and energy-conservation diagnostics, and a small CLI.
"""

from .bie import (
    CombinedFieldParams,
    NystromSystem,
    QuadratureConfig,
    assemble,
    fourier_interpolate,
    split_kernel,
)
from .driver import (
    ConvergenceStudy,
    IncidentWave,
    RayleighSpectrum,
    ScatterResult,
    angle_sweep,
    coefficient_error,
    dirichlet_rhs,
    energy_error,
    green_convergence_study,
    neumann_rhs,
    rayleigh_coefficients,
    solve_grating,
)
from .errors import (
    ConfigurationError,
    FactorizationError,
    MetricUndefinedError,
    SingularEvaluationError,
    WoodAnomalyError,
)
from .lattice import (
    DualMode,
    QuasiPeriodicity,
    WindowProfile,
    fourier_green,
    free_green,
    gamma,
    window_value,
    windowed_green,
    windowed_green_gradient,
    wood_modes,
)
from .shifted import (
    GrazingSet,
    ShiftConfig,
    binomial_weights,
    grazing_set,
    modified_green,
    modified_green_gradient,
    regularizer_v,
    shifted_fourier_green,
    shifted_windowed_green,
    shifted_windowed_green_gradient,
    validate_shift,
    wood_factor,
)
from .solve import SolveReport, direct_solve, gmres_solve
from .surface import (
    GratingSurface,
    SurfaceGrid,
    cos_cos_surface,
    flat_surface,
    sample_surface,
)

__all__ = [
    "CombinedFieldParams", "NystromSystem", "QuadratureConfig", "assemble",
    "fourier_interpolate", "split_kernel",
    "ConvergenceStudy", "IncidentWave", "RayleighSpectrum", "ScatterResult",
    "angle_sweep", "coefficient_error", "dirichlet_rhs", "energy_error",
    "green_convergence_study", "neumann_rhs", "rayleigh_coefficients",
    "solve_grating",
    "ConfigurationError", "FactorizationError", "MetricUndefinedError",
    "SingularEvaluationError", "WoodAnomalyError",
    "DualMode", "QuasiPeriodicity", "WindowProfile", "fourier_green",
    "free_green", "gamma", "window_value", "windowed_green",
    "windowed_green_gradient", "wood_modes",
    "GrazingSet", "ShiftConfig", "binomial_weights", "grazing_set",
    "modified_green", "modified_green_gradient", "regularizer_v",
    "shifted_fourier_green", "shifted_windowed_green",
    "shifted_windowed_green_gradient", "validate_shift", "wood_factor",
    "SolveReport", "direct_solve", "gmres_solve",
    "GratingSurface", "SurfaceGrid", "cos_cos_surface", "flat_surface",
    "sample_surface",
]
