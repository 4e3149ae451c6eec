"""Shifted quasi-periodic Green functions: finite and convergent at Wood anomalies.

The plain lattice sum diverges when a dual mode grazes (gamma_jl = 0).  The
cure implemented here replaces every monopole by a signed binomial combination
of p + 1 monopoles whose sources are displaced downward by multiples of a
shift distance d:

    G_p(x, y, z) = sum_{q=0}^{p} a_pq G(x, y, z + q d),   a_pq = (-1)^q C(p, q).

Because the weights annihilate polynomials of degree < p, the slowly decaying
grazing contributions cancel and the windowed truncation converges
algebraically, like a^{-(ceil(p/2) - 1/2)}, even exactly at a Wood frequency.
The cancellation also suppresses the grazing modes in the far field, so a
finite "regularizer" v (a sum of grazing plane waves with coefficients b_jl)
is added back to keep the associated integral operators invertible; the sum
G_p + v is the modified Green function used by the grating solver at and near
Wood configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .lattice import (
    EXACT_WOOD_RTOL,
    DualMode,
    QuasiPeriodicity,
    WindowProfile,
    default_j_max,
    gamma,
    windowed_green,
    windowed_green_gradient,
    wood_modes,
)

__all__ = [
    "ShiftConfig",
    "GrazingSet",
    "binomial_weights",
    "shifted_windowed_green",
    "shifted_windowed_green_gradient",
    "shifted_fourier_green",
    "regularizer_v",
    "regularizer_v_gradient",
    "modified_green",
    "modified_green_gradient",
    "wood_factor",
    "grazing_set",
    "validate_shift",
]

#: Switch to the series form of the mode z-factor when |gamma| (|z| + p d) is below this.
_SERIES_SWITCH = 1e-3

#: Terms kept in the Taylor series for sin(gamma u)/gamma and its cosine companion.
_SERIES_TERMS = 12


@dataclass(frozen=True)
class ShiftConfig:
    """Shift order p, shift distance d and the grazing-coefficient rule.

    ``grazing_threshold`` declares a mode grazing when |gamma_jl| / k falls
    below it; every grazing mode receives the constant coefficient
    ``b_value`` in the regularizer.
    """

    p: int = 3
    d: float = 1.4
    b_value: complex = 1.0 + 0.0j
    grazing_threshold: float = 1e-2

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("shift order p must be >= 0")
        if self.d <= 0:
            raise ValueError("shift distance d must be positive")
        if self.grazing_threshold <= 0:
            raise ValueError("grazing_threshold must be positive")


@dataclass(frozen=True)
class GrazingSet:
    """The finite set of dual modes treated as grazing for a configuration."""

    modes: tuple[DualMode, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)


def grazing_set(qp: QuasiPeriodicity, sc: ShiftConfig, j_max: int | None = None) -> GrazingSet:
    """Collect all modes with |gamma_jl| / k below the configured threshold."""
    if j_max is None:
        # anything grazing satisfies alpha_j^2 + beta_l^2 ~ k^2, so a window of
        # k/(2 pi / d) + Bloch slack around the origin covers every candidate
        j_max = int(math.ceil((qp.k + abs(qp.alpha) + abs(qp.beta))
                              * max(qp.d1, qp.d2) / (2.0 * np.pi))) + 1
    return GrazingSet(tuple(wood_modes(qp, j_max, sc.grazing_threshold)))


def binomial_weights(p: int) -> np.ndarray:
    """Signed binomial weights a_pq = (-1)^q C(p, q), q = 0..p."""
    if p < 0:
        raise ValueError("p must be >= 0")
    return np.array([(-1) ** q * math.comb(p, q) for q in range(p + 1)], dtype=float)


def shifted_windowed_green(qp: QuasiPeriodicity, w: WindowProfile, sc: ShiftConfig,
                           a: float, pt):
    """Windowed lattice sum of the shifted Green function.

    Identical to summing ``windowed_green`` at the p + 1 vertically shifted
    points z + q d with the signed binomial weights, since the window does not
    depend on z.  p = 0 reduces exactly to the unshifted sum.
    """
    pts = np.asarray(pt, dtype=float)
    apq = binomial_weights(sc.p)
    total = None
    for q, w_q in enumerate(apq):
        shifted_pt = pts.copy()
        shifted_pt[..., 2] = pts[..., 2] + q * sc.d
        val = windowed_green(qp, w, a, shifted_pt)
        total = w_q * val if total is None else total + w_q * val
    return total


def shifted_windowed_green_gradient(qp: QuasiPeriodicity, w: WindowProfile,
                                    sc: ShiftConfig, a: float, pt):
    """Analytic gradient of ``shifted_windowed_green`` with respect to the point."""
    pts = np.asarray(pt, dtype=float)
    apq = binomial_weights(sc.p)
    total = None
    for q, w_q in enumerate(apq):
        shifted_pt = pts.copy()
        shifted_pt[..., 2] = pts[..., 2] + q * sc.d
        val = windowed_green_gradient(qp, w, a, shifted_pt)
        total = w_q * val if total is None else total + w_q * val
    return total


def _mode_z_factor(gam: complex, u: np.ndarray, zq: np.ndarray, apq: np.ndarray) -> complex:
    """Stable evaluation of sum_q (a_pq / gamma) e^{i gamma |z + q d|}.

    ``u`` holds |z + q d| and ``zq`` the signed z + q d.  Away from gamma = 0
    the expression is evaluated directly.  Near gamma = 0 severe cancellation
    (the weights annihilate the leading Taylor terms) is avoided by splitting
    into the even (cosine) part, summed through the moments of zq, and the odd
    part i sum_q a_pq u_q sinc(gamma u_q), each expanded in powers of
    gamma^2.  At gamma = 0 the even part vanishes identically and the factor
    reduces to i sum_q a_pq u_q.
    """
    g2 = gam * gam  # real for both propagating and evanescent modes
    scale = abs(gam) * (np.max(u) if len(u) else 0.0)
    if abs(gam) == 0.0:
        return 1j * complex(np.dot(apq, u))
    if scale >= _SERIES_SWITCH:
        return complex(np.dot(apq, np.exp(1j * gam * u))) / gam
    # cosine part: sum_q a_pq cos(gamma zq) / gamma, expanded in the even
    # moments of zq; the t = 0 moment is exactly 0 by the weight identities,
    # and the division by gamma is harmless because the bracket is O(gamma^p)
    even = sum((-1) ** t * (g2 ** t) * float(np.dot(apq, zq ** (2 * t)))
               / math.factorial(2 * t) for t in range(1, _SERIES_TERMS + 1)) / gam
    # odd part: i sum_q a_pq u_q sinc(gamma u_q) with a truncated sinc series
    arg2 = g2 * u * u
    sinc = sum((-arg2) ** t / math.factorial(2 * t + 1) for t in range(_SERIES_TERMS))
    odd = 1j * complex(np.dot(apq, u * sinc))
    return complex(even + odd)


def shifted_fourier_green(qp: QuasiPeriodicity, sc: ShiftConfig, pt,
                          j_max: int | None = None):
    """Dual-lattice (spectral) form of the shifted Green function.

    Finite at exact Wood configurations: each mode's z-factor
    sum_q (a_pq / gamma) e^{i gamma |z + q d|} has a removable singularity at
    gamma = 0 thanks to the weight identities, and the implementation crosses
    it with a series expansion.  Requires z + q d != 0 for every q.
    """
    pts = np.asarray(pt, dtype=float)
    scalar = pts.ndim == 1
    pts2 = np.atleast_2d(pts)
    apq = binomial_weights(sc.p)
    out = np.zeros(len(pts2), dtype=complex)
    qs = np.arange(sc.p + 1)
    for i, (x, y, z) in enumerate(pts2):
        zq = z + qs * sc.d
        u = np.abs(zq)
        if np.min(u) == 0.0:
            raise ValueError("point lies on a shifted source plane (z + q d = 0)")
        jm = j_max if j_max is not None else default_j_max(qp, float(np.min(u)))
        js = np.arange(-jm, jm + 1)
        total = 0.0 + 0.0j
        for j in js:
            aj = qp.alpha + 2.0 * np.pi * j / qp.d1
            for l in js:
                bl = qp.beta + 2.0 * np.pi * l / qp.d2
                gam = gamma(qp, j, l)
                zf = _mode_z_factor(gam, u, zq, apq)
                total += np.exp(1j * (aj * x + bl * y)) * zf
        out[i] = 1j / (2.0 * qp.d1 * qp.d2) * total
    if scalar:
        return complex(out[0])
    return out.reshape(pts.shape[:-1])


def regularizer_v(qp: QuasiPeriodicity, sc: ShiftConfig, grazing: GrazingSet, pt):
    """Finite sum of grazing plane waves reinstating the suppressed far field.

    v(x) = i/(2 d1 d2) sum_{(j,l) grazing} b_jl e^{i(alpha_j x + beta_l y)} e^{i gamma_jl z}.
    Each term solves the Helmholtz equation exactly.
    """
    pts = np.asarray(pt, dtype=float)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    total = np.zeros(np.shape(x), dtype=complex)
    for m in grazing:
        total = total + sc.b_value * np.exp(
            1j * (m.alpha_j * x + m.beta_l * y)) * np.exp(1j * m.gamma_jl * z)
    val = 1j / (2.0 * qp.d1 * qp.d2) * total
    if pts.ndim == 1:
        return complex(val)
    return val


def regularizer_v_gradient(qp: QuasiPeriodicity, sc: ShiftConfig, grazing: GrazingSet, pt):
    """Analytic gradient of ``regularizer_v``; shape (..., 3)."""
    pts = np.asarray(pt, dtype=float)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    grad = np.zeros(np.shape(x) + (3,), dtype=complex)
    for m in grazing:
        term = sc.b_value * np.exp(1j * (m.alpha_j * x + m.beta_l * y)) \
            * np.exp(1j * m.gamma_jl * z)
        grad[..., 0] += 1j * m.alpha_j * term
        grad[..., 1] += 1j * m.beta_l * term
        grad[..., 2] += 1j * m.gamma_jl * term
    return 1j / (2.0 * qp.d1 * qp.d2) * grad


def modified_green(qp: QuasiPeriodicity, w: WindowProfile, sc: ShiftConfig,
                   grazing: GrazingSet, a: float, pt):
    """Shifted windowed Green function plus the grazing-mode regularizer."""
    return shifted_windowed_green(qp, w, sc, a, pt) + regularizer_v(qp, sc, grazing, pt)


def modified_green_gradient(qp: QuasiPeriodicity, w: WindowProfile, sc: ShiftConfig,
                            grazing: GrazingSet, a: float, pt):
    """Analytic gradient of ``modified_green``; shape (..., 3)."""
    return shifted_windowed_green_gradient(qp, w, sc, a, pt) \
        + regularizer_v_gradient(qp, sc, grazing, pt)


def wood_factor(qp: QuasiPeriodicity, sc: ShiftConfig, j: int, l: int) -> complex:
    """Factor mapping a density moment to the far-field amplitude of mode (j, l).

    For the shifted kernel the mode's outgoing amplitude carries the factor
    (1 - e^{i gamma d})^p / gamma, plus b_jl when the mode is grazing.  At an
    exactly grazing mode the limit is -i d for p = 1 and 0 for p >= 2.
    """
    gam = gamma(qp, j, l)
    grazing_b = sc.b_value if abs(gam) / qp.k < sc.grazing_threshold else 0.0
    if abs(gam) / qp.k < EXACT_WOOD_RTOL:
        base = -1j * sc.d if sc.p == 1 else (1.0 if sc.p == 0 else 0.0)
        return complex(base + grazing_b)
    return complex((1.0 - np.exp(1j * gam * sc.d)) ** sc.p / gam + grazing_b)


def validate_shift(qp: QuasiPeriodicity, sc: ShiftConfig, j_max: int | None = None,
                   tol: float = 1e-6) -> None:
    """Reject shift distances that kill a propagating mode's far field.

    If e^{i gamma_jl d} = 1 for a propagating mode, the shifted combination
    cancels that mode's radiation entirely and its amplitude cannot be
    recovered.  Raises ConfigurationError when |1 - e^{i gamma d}| falls below
    ``tol`` for any non-grazing propagating mode.
    """
    if j_max is None:
        j_max = int(math.ceil((qp.k + abs(qp.alpha) + abs(qp.beta))
                              * max(qp.d1, qp.d2) / (2.0 * np.pi))) + 1
    for j in range(-j_max, j_max + 1):
        for l in range(-j_max, j_max + 1):
            gam = gamma(qp, j, l)
            if gam.imag != 0.0 or abs(gam) / qp.k < sc.grazing_threshold:
                continue
            if abs(1.0 - np.exp(1j * gam * sc.d)) < tol:
                raise ConfigurationError(
                    f"shift distance d = {sc.d} is degenerate for propagating mode "
                    f"({j}, {l}): e^(i gamma d) = 1 suppresses its far field")
