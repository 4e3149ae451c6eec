"""Quasi-periodic Helmholtz Green function by smoothly windowed lattice sums.

The Green function for the 3D Helmholtz equation with Bloch-periodic boundary
conditions on a 2D lattice of periods (d1, d2) is the conditionally convergent
sum of phase-weighted outgoing monopoles

    G(x, y, z) = (1/4pi) sum_{m,n} exp(i k r_mn) / r_mn * exp(-i (alpha m d1 + beta n d2)),

with r_mn^2 = (x + m d1)^2 + (y + n d2)^2 + z^2.  Truncating this sum with a
smooth compactly supported window of slowly growing support radius ``a``
converges super-algebraically to the true Green function away from Wood
anomalies (configurations where some vertical wavenumber gamma_jl vanishes).

The same function admits a spectral representation over the dual lattice,

    G(x, y, z) = i/(2 d1 d2) sum_{j,l} exp(i (alpha_j x + beta_l y)) exp(i gamma_jl |z|) / gamma_jl,

with alpha_j = alpha + 2 pi j / d1, beta_l = beta + 2 pi l / d2 and
gamma_jl = (k^2 - alpha_j^2 - beta_l^2)^(1/2) taken positive real for
propagating modes and positive imaginary for evanescent ones.  This series
converges fast for |z| > 0 and serves as an independent cross-check of the
windowed sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularEvaluationError, WoodAnomalyError

__all__ = [
    "QuasiPeriodicity",
    "DualMode",
    "WindowProfile",
    "gamma",
    "wood_modes",
    "window_value",
    "window_derivative",
    "free_green",
    "windowed_green",
    "windowed_green_gradient",
    "fourier_green",
    "lattice_indices",
]

#: |gamma_jl| / k below this counts as an exactly grazing (Wood) mode.
EXACT_WOOD_RTOL = 1e-12

#: Collision distance, relative to max(d1, d2), that triggers a singular-evaluation error.
_COLLISION_RTOL = 1e-10

#: Lattice chunk size for the windowed sums (bounds peak memory of the
#: (points x lattice) intermediate arrays).
_CHUNK = 1 << 19


@dataclass(frozen=True)
class QuasiPeriodicity:
    """Wavenumber, lattice periods and Bloch phases of a quasi-periodic problem.

    Attributes
    ----------
    k : float
        Wavenumber, > 0.
    d1, d2 : float
        Lattice periods in x and y, > 0.
    alpha, beta : float
        Bloch wavevector components (phase shift per period is alpha*d1, beta*d2).
    """

    k: float
    d1: float
    d2: float
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (self.k > 0 and self.d1 > 0 and self.d2 > 0):
            raise ValueError("k, d1, d2 must all be positive")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha, beta must be finite")

    def alpha_j(self, j):
        return self.alpha + 2.0 * np.pi * np.asarray(j) / self.d1

    def beta_l(self, l):
        return self.beta + 2.0 * np.pi * np.asarray(l) / self.d2


@dataclass(frozen=True)
class DualMode:
    """One dual-lattice (Rayleigh) mode with its vertical wavenumber."""

    j: int
    l: int
    alpha_j: float
    beta_l: float
    gamma_jl: complex
    flag: str = ""  # "exact" or "near" when produced by wood_modes


def gamma(qp: QuasiPeriodicity, j, l):
    """Vertical wavenumber gamma_jl = (k^2 - alpha_j^2 - beta_l^2)^(1/2).

    The branch cut sits on the negative imaginary semiaxis: positive arguments
    map to the positive real root, negative ones to the positive imaginary
    root.  Accepts scalar or array ``j``, ``l``.
    """
    aj = qp.alpha_j(j)
    bl = qp.beta_l(l)
    w = qp.k**2 - aj * aj - bl * bl
    w = np.asarray(w, dtype=float)
    g = np.where(w >= 0.0, np.sqrt(np.maximum(w, 0.0)) + 0.0j,
                 1.0j * np.sqrt(np.maximum(-w, 0.0)))
    if g.ndim == 0:
        return complex(g)
    return g


def wood_modes(qp: QuasiPeriodicity, j_max: int, grazing_tol: float) -> list[DualMode]:
    """Dual modes with |gamma_jl| / k below ``grazing_tol``, flagged exact or near.

    A mode is flagged "exact" when |gamma_jl| / k < 1e-12 (double precision
    cannot distinguish it from a true Wood configuration) and "near"
    otherwise.
    """
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    if grazing_tol <= 0:
        raise ValueError("grazing_tol must be positive")
    out = []
    for j in range(-j_max, j_max + 1):
        for l in range(-j_max, j_max + 1):
            g = gamma(qp, j, l)
            r = abs(g) / qp.k
            if r < grazing_tol:
                flag = "exact" if r < EXACT_WOOD_RTOL else "near"
                out.append(DualMode(j, l, float(qp.alpha_j(j)), float(qp.beta_l(l)), g, flag))
    return out


@dataclass(frozen=True)
class WindowProfile:
    """Smooth compactly supported truncation window.

    The window is 1 for normalized radius u <= ``inner``, 0 for u >= ``outer``
    and decays smoothly and monotonically in between.  Two profile shapes are
    available:

    - "figure-bump": psi(u) = exp(2 e^{1/(1-x)} / (x-2)) with x the radius
      mapped affinely onto [1, 2]; infinitely smooth.
    - "polynomial-blend": quintic smoothstep, C^2, free of the exponential
      under/overflow the bump profile can hit near its endpoints.

    ``separable`` selects the product form psi(s) psi(t) over the radial form
    psi(sqrt(s^2 + t^2)).  ``x_dependent`` controls whether the lattice sums
    evaluate the window at ((x + m d1)/a, (y + n d2)/a) (window moves with the
    evaluation point) or at (m d1/a, n d2/a) (window fixed on the lattice).
    """

    inner: float = 1.0
    outer: float = 2.0
    shape: str = "figure-bump"
    separable: bool = True
    x_dependent: bool = False

    def __post_init__(self):
        if not (0 < self.inner < self.outer):
            raise ValueError("need 0 < inner < outer")
        if self.shape not in ("figure-bump", "polynomial-blend"):
            raise ValueError(f"unknown window shape {self.shape!r}")


def _psi(w: WindowProfile, u):
    """1D window profile as a function of |u|, vectorized."""
    u = np.abs(np.asarray(u, dtype=float))
    x = 1.0 + (u - w.inner) / (w.outer - w.inner)
    out = np.ones_like(x)
    out[x >= 2.0] = 0.0
    band = (x > 1.0) & (x < 2.0)
    if np.any(band):
        xb = x[band]
        if w.shape == "figure-bump":
            out[band] = np.exp(2.0 * np.exp(1.0 / (1.0 - xb)) / (xb - 2.0))
        else:
            t = xb - 1.0
            out[band] = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    return out


def _psi_prime(w: WindowProfile, u):
    """Derivative of ``_psi`` with respect to signed u, vectorized."""
    u = np.asarray(u, dtype=float)
    s = np.sign(u)
    x = 1.0 + (np.abs(u) - w.inner) / (w.outer - w.inner)
    out = np.zeros_like(x)
    band = (x > 1.0) & (x < 2.0)
    if np.any(band):
        xb = x[band]
        if w.shape == "figure-bump":
            e = np.exp(1.0 / (1.0 - xb))
            val = np.exp(2.0 * e / (xb - 2.0))
            h = 2.0 * e * (1.0 / ((1.0 - xb) ** 2 * (xb - 2.0)) - 1.0 / (xb - 2.0) ** 2)
            out[band] = val * h
        else:
            t = xb - 1.0
            out[band] = -30.0 * t * t * (1.0 - t) ** 2
        out[band] *= s[band] / (w.outer - w.inner)
    return out


def window_value(w: WindowProfile, s, t):
    """Window value at normalized lattice coordinates (s, t), in [0, 1]."""
    if w.separable:
        return _psi(w, s) * _psi(w, t)
    return _psi(w, np.hypot(s, t))


def window_derivative(w: WindowProfile, s, t):
    """Partial derivatives (d/ds, d/dt) of window_value, vectorized."""
    if w.separable:
        return _psi_prime(w, s) * _psi(w, t), _psi(w, s) * _psi_prime(w, t)
    u = np.hypot(s, t)
    du = _psi_prime(w, u)
    with np.errstate(invalid="ignore", divide="ignore"):
        gs = np.where(u > 0, du * s / np.where(u > 0, u, 1.0), 0.0)
        gt = np.where(u > 0, du * t / np.where(u > 0, u, 1.0), 0.0)
    return gs, gt


def free_green(k: float, r):
    """Outgoing free-space Green function e^{ikr} / (4 pi r), r > 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("free_green requires r > 0")
    val = np.exp(1j * k * r) / (4.0 * np.pi * r)
    if val.ndim == 0:
        return complex(val)
    return val


def lattice_indices(w: WindowProfile, a: float, d1: float, d2: float,
                    pad1: float = 0.0, pad2: float = 0.0):
    """Lattice index arrays (m, n) covering the window support, shell-ordered.

    Returns integer arrays sorted by concentric rectangular shells
    max(|m|, |n|) outward, with a fixed (m, n) lexicographic order inside each
    shell, so that the conditionally convergent sums are always accumulated in
    the same deterministic order.  ``pad1``/``pad2`` widen the candidate box
    (in absolute length) to cover x-dependent windows, where the support
    shifts with the evaluation point.
    """
    ext1 = w.outer * a + pad1
    ext2 = w.outer * a + pad2
    m_max = int(math.floor(ext1 / d1))
    n_max = int(math.floor(ext2 / d2))
    m = np.arange(-m_max, m_max + 1)
    n = np.arange(-n_max, n_max + 1)
    mm, nn = np.meshgrid(m, n, indexing="ij")
    mm = mm.ravel()
    nn = nn.ravel()
    shell = np.maximum(np.abs(mm), np.abs(nn))
    order = np.lexsort((nn, mm, shell))
    return mm[order], nn[order]


def _as_points(pt):
    """Normalize a point argument to a (P, 3) float array plus a scalar flag."""
    arr = np.asarray(pt, dtype=float)
    scalar = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[-1] != 3:
        raise ValueError("points must have 3 components")
    return pts.reshape(-1, 3), scalar, arr.shape[:-1]


def _window_on_chunk(qp, w, a, mm, nn, x, y):
    """Window weights for a lattice chunk; shape (P, M) if x-dependent, (M,) otherwise."""
    if w.x_dependent:
        s = (x[:, None] + mm[None, :] * qp.d1) / a
        t = (y[:, None] + nn[None, :] * qp.d2) / a
        return window_value(w, s, t)
    return window_value(w, (mm * qp.d1) / a, (nn * qp.d2) / a)


def windowed_green(qp: QuasiPeriodicity, w: WindowProfile, a: float, pt,
                   compensated: bool = False):
    """Windowed lattice-sum Green function at one or many points.

    ``pt`` is a length-3 sequence or an array of shape (..., 3) holding the
    difference x - x'.  The sum runs, in a fixed concentric-shell order, over
    all lattice indices whose window value is nonzero.  ``compensated``
    switches the accumulation across lattice chunks to Kahan summation, for
    checking sensitivity to roundoff in the conditionally convergent sum.

    Raises
    ------
    SingularEvaluationError
        If a point collides with a retained source lattice point.
    """
    if a <= 0:
        raise ValueError("window radius a must be positive")
    pts, scalar, shape = _as_points(pt)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    pad1 = float(np.max(np.abs(x))) if w.x_dependent else 0.0
    pad2 = float(np.max(np.abs(y))) if w.x_dependent else 0.0
    mm_all, nn_all = lattice_indices(w, a, qp.d1, qp.d2, pad1, pad2)
    tol = _COLLISION_RTOL * max(qp.d1, qp.d2)
    total = np.zeros(len(pts), dtype=complex)
    carry = np.zeros(len(pts), dtype=complex)
    step = max(1024, _CHUNK // max(1, len(pts)))
    for lo in range(0, len(mm_all), step):
        mm = mm_all[lo:lo + step]
        nn = nn_all[lo:lo + step]
        chi = _window_on_chunk(qp, w, a, mm, nn, x, y)
        X = x[:, None] + mm[None, :] * qp.d1
        Y = y[:, None] + nn[None, :] * qp.d2
        r = np.sqrt(X * X + Y * Y + z[:, None] ** 2)
        bad = (r < tol) & (chi > 0)
        if np.any(bad):
            p, i = np.argwhere(bad)[0]
            raise SingularEvaluationError(
                f"evaluation point {pts[p]} collides with lattice source (m, n) = "
                f"({mm[i]}, {nn[i]})")
        phase = np.exp(-1j * (qp.alpha * qp.d1) * mm - 1j * (qp.beta * qp.d2) * nn)
        terms = np.exp(1j * qp.k * r) / (4.0 * np.pi * r) * phase[None, :] * chi
        part = terms.sum(axis=1)
        if compensated:
            yk = part - carry
            tk = total + yk
            carry = (tk - total) - yk
            total = tk
        else:
            total += part
    if scalar:
        return complex(total[0])
    return total.reshape(shape)


def windowed_green_gradient(qp: QuasiPeriodicity, w: WindowProfile, a: float, pt):
    """Analytic gradient of ``windowed_green`` with respect to the point.

    When the window is x-dependent its own derivative contributes; otherwise
    the window factors are constants and only the monopoles differentiate.
    Returns shape (..., 3).
    """
    if a <= 0:
        raise ValueError("window radius a must be positive")
    pts, scalar, shape = _as_points(pt)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    pad1 = float(np.max(np.abs(x))) if w.x_dependent else 0.0
    pad2 = float(np.max(np.abs(y))) if w.x_dependent else 0.0
    mm_all, nn_all = lattice_indices(w, a, qp.d1, qp.d2, pad1, pad2)
    tol = _COLLISION_RTOL * max(qp.d1, qp.d2)
    grad = np.zeros((len(pts), 3), dtype=complex)
    step = max(1024, _CHUNK // max(1, len(pts)))
    for lo in range(0, len(mm_all), step):
        mm = mm_all[lo:lo + step]
        nn = nn_all[lo:lo + step]
        chi = _window_on_chunk(qp, w, a, mm, nn, x, y)
        X = x[:, None] + mm[None, :] * qp.d1
        Y = y[:, None] + nn[None, :] * qp.d2
        Z = z[:, None]
        r = np.sqrt(X * X + Y * Y + Z * Z)
        bad = (r < tol) & (chi > 0)
        if np.any(bad):
            p, i = np.argwhere(bad)[0]
            raise SingularEvaluationError(
                f"evaluation point {pts[p]} collides with lattice source (m, n) = "
                f"({mm[i]}, {nn[i]})")
        phase = np.exp(-1j * (qp.alpha * qp.d1) * mm - 1j * (qp.beta * qp.d2) * nn)
        mono = np.exp(1j * qp.k * r) / (4.0 * np.pi * r) * phase[None, :]
        dmono = mono * (1j * qp.k - 1.0 / r) / r
        grad[:, 0] += (dmono * X * chi).sum(axis=1)
        grad[:, 1] += (dmono * Y * chi).sum(axis=1)
        grad[:, 2] += (dmono * Z * chi).sum(axis=1)
        if w.x_dependent:
            if w.separable:
                s = X / a
                t = Y / a
                dchix = _psi_prime(w, s) * _psi(w, t) / a
                dchiy = _psi(w, s) * _psi_prime(w, t) / a
            else:
                u = np.hypot(X, Y) / a
                du = _psi_prime(w, u)
                usafe = np.where(u > 0, u, 1.0)
                dchix = np.where(u > 0, du * X / (a * a * usafe), 0.0)
                dchiy = np.where(u > 0, du * Y / (a * a * usafe), 0.0)
            grad[:, 0] += (mono * dchix).sum(axis=1)
            grad[:, 1] += (mono * dchiy).sum(axis=1)
    if scalar:
        return grad[0]
    return grad.reshape(shape + (3,))


def default_j_max(qp: QuasiPeriodicity, z: float, drop: float = 37.0) -> int:
    """Dual-lattice truncation order for a target evanescent decay.

    Picks j_max so the slowest retained evanescent mode satisfies
    exp(-|gamma| |z|) < e^{-drop} (about 1e-16 for the default), with a floor
    of 10.
    """
    z = abs(z)
    if z == 0:
        raise ValueError("spectral truncation needs |z| > 0")
    d = max(qp.d1, qp.d2)
    need = (qp.k + drop / z + abs(qp.alpha) + abs(qp.beta)) * d / (2.0 * np.pi)
    return max(10, int(math.ceil(need)) + 1)


def _dual_grids(qp: QuasiPeriodicity, j_max: int):
    js = np.arange(-j_max, j_max + 1)
    aj = qp.alpha + 2.0 * np.pi * js / qp.d1
    bl = qp.beta + 2.0 * np.pi * js / qp.d2
    AJ, BL = np.meshgrid(aj, bl, indexing="ij")
    w = qp.k**2 - AJ * AJ - BL * BL
    gam = np.where(w >= 0.0, np.sqrt(np.maximum(w, 0.0)) + 0.0j,
                   1.0j * np.sqrt(np.maximum(-w, 0.0)))
    return AJ, BL, gam


def fourier_green(qp: QuasiPeriodicity, pt, j_max: int | None = None):
    """Spectral (dual-lattice) form of the Green function; requires |z| > 0.

    This is the independent oracle for ``windowed_green`` away from Wood
    anomalies.  At an exact Wood configuration a retained gamma_jl vanishes
    and the series is meaningless; a WoodAnomalyError points the caller to the
    shifted/modified kernels instead.
    """
    pts, scalar, shape = _as_points(pt)
    zmin = float(np.min(np.abs(pts[:, 2])))
    if zmin <= 0.0:
        raise ValueError("fourier_green requires |z| > 0")
    if j_max is None:
        j_max = default_j_max(qp, zmin)
    AJ, BL, gam = _dual_grids(qp, j_max)
    if np.any(np.abs(gam) < EXACT_WOOD_RTOL * qp.k):
        jj, ll = np.argwhere(np.abs(gam) < EXACT_WOOD_RTOL * qp.k)[0] - j_max
        raise WoodAnomalyError(
            f"gamma_({jj},{ll}) = 0: the plain spectral series diverges; use the "
            "shifted or modified Green function")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    ph = np.exp(1j * (x[:, None] * AJ.ravel()[None, :] + y[:, None] * BL.ravel()[None, :]))
    vert = np.exp(1j * np.abs(z)[:, None] * gam.ravel()[None, :]) / gam.ravel()[None, :]
    total = (1j / (2.0 * qp.d1 * qp.d2)) * (ph * vert).sum(axis=1)
    if scalar:
        return complex(total[0])
    return total.reshape(shape)
