"""Doubly periodic grating surfaces z = f(x, y) and their Nystrom grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError

__all__ = ["GratingSurface", "SurfaceGrid", "flat_surface", "cos_cos_surface", "sample_surface"]


@dataclass(frozen=True)
class GratingSurface:
    """Height function of a biperiodic grating with analytic derivatives.

    All callables accept numpy arrays (broadcasting).  ``z_minus`` and
    ``z_plus`` bound the profile from below and above.
    """

    f: Callable
    fx: Callable
    fy: Callable
    fxx: Callable
    fxy: Callable
    fyy: Callable
    d1: float = 1.0
    d2: float = 1.0
    z_minus: float = -1.0
    z_plus: float = 1.0

    def validate(self, samples: int = 7) -> None:
        """Spot-check periodicity and the height bounds at a few points."""
        x = np.linspace(0.0, self.d1, samples, endpoint=False)
        y = np.linspace(0.0, self.d2, samples, endpoint=False)
        X, Y = np.meshgrid(x, y, indexing="ij")
        F = self.f(X, Y)
        if not np.allclose(F, self.f(X + self.d1, Y + self.d2), atol=1e-12):
            raise ConfigurationError("surface is not (d1, d2) periodic")
        if np.any(F <= self.z_minus) or np.any(F >= self.z_plus):
            raise ConfigurationError("surface height leaves (z_minus, z_plus)")


def flat_surface(d1: float = 1.0, d2: float = 1.0) -> GratingSurface:
    """The plane z = 0."""
    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    return GratingSurface(f=zero, fx=zero, fy=zero, fxx=zero, fxy=zero, fyy=zero,
                          d1=d1, d2=d2, z_minus=-0.5, z_plus=0.5)


def cos_cos_surface(amplitude: float = 0.5, d1: float = 1.0, d2: float = 1.0) -> GratingSurface:
    """The test profile f(x, y) = A cos(2 pi x / d1) cos(2 pi y / d2)."""
    w1 = 2.0 * np.pi / d1
    w2 = 2.0 * np.pi / d2
    A = amplitude
    return GratingSurface(
        f=lambda x, y: A * np.cos(w1 * x) * np.cos(w2 * y),
        fx=lambda x, y: -A * w1 * np.sin(w1 * x) * np.cos(w2 * y),
        fy=lambda x, y: -A * w2 * np.cos(w1 * x) * np.sin(w2 * y),
        fxx=lambda x, y: -A * w1 * w1 * np.cos(w1 * x) * np.cos(w2 * y),
        fxy=lambda x, y: A * w1 * w2 * np.sin(w1 * x) * np.sin(w2 * y),
        fyy=lambda x, y: -A * w2 * w2 * np.cos(w1 * x) * np.cos(w2 * y),
        d1=d1, d2=d2, z_minus=-abs(A) - 0.5, z_plus=abs(A) + 0.5)


@dataclass(frozen=True)
class SurfaceGrid:
    """Equispaced N x N Nystrom grid with cached geometry.

    Nodes are (x_p, y_q) = (p d1 / N, q d2 / N); all arrays are (N, N) in
    (p, q) index order.  ``normal`` is the unnormalized upward normal
    (-fx, -fy, 1); ``g`` = sqrt(fx^2 + fy^2 + 1) is the surface element.
    """

    surface: GratingSurface
    N: int
    x: np.ndarray
    y: np.ndarray
    f: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fxx: np.ndarray
    fxy: np.ndarray
    fyy: np.ndarray
    g: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        """Unnormalized normals, shape (N, N, 3)."""
        return np.stack([-self.fx, -self.fy, np.ones_like(self.fx)], axis=-1)

    @property
    def size(self) -> int:
        return self.N * self.N


def sample_surface(surface: GratingSurface, N: int) -> SurfaceGrid:
    """Sample the surface and its derivatives on the N x N equispaced grid."""
    if N % 2 != 0 or N < 8:
        raise ConfigurationError("grid size N must be even and >= 8")
    surface.validate()
    x = np.arange(N) * surface.d1 / N
    y = np.arange(N) * surface.d2 / N
    X, Y = np.meshgrid(x, y, indexing="ij")
    fx = surface.fx(X, Y)
    fy = surface.fy(X, Y)
    return SurfaceGrid(
        surface=surface, N=N, x=x, y=y,
        f=surface.f(X, Y), fx=fx, fy=fy,
        fxx=surface.fxx(X, Y), fxy=surface.fxy(X, Y), fyy=surface.fyy(X, Y),
        g=np.sqrt(fx * fx + fy * fy + 1.0))
