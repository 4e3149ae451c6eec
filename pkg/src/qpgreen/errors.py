"""Exception types shared across the package."""


class SingularEvaluationError(ValueError):
    """An evaluation point collided with a (possibly shifted) source lattice point."""


class WoodAnomalyError(ValueError):
    """A grazing mode (gamma_jl = 0) makes the requested computation ill-defined.

    The plain spectral series and the plain windowed lattice sum both break
    down at these configurations; callers should switch to the shifted or
    modified kernel.
    """


class ConfigurationError(ValueError):
    """A discretization or quadrature parameter violates its contract."""


class MetricUndefinedError(ValueError):
    """A diagnostic quantity is undefined for the given configuration."""


class FactorizationError(RuntimeError):
    """Direct factorization failed (matrix singular to working precision)."""
