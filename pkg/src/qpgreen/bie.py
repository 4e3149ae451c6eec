"""Nystrom discretization of the periodic combined-field integral equations.

One period cell of the grating carries an equispaced N x N grid.  Each layer
potential splits, per target, into

- a globally smooth part (the i sin remainder of the central image, every
  non-central lattice image, every vertically shifted image and the
  regularizer), integrated by the trapezoidal rule over a window of lattice
  images centered at the target;
- a weakly singular local part (the cos-type piece of the central image),
  localized by a floating partition of unity of radii (r0, r1) and integrated
  in polar coordinates around the target, with the density evaluated at
  off-grid polar nodes through trigonometric interpolation;
- the remainder (1 - pou) of the singular piece, which is smooth and joins the
  trapezoidal sum.

All kernels are the phase-extracted periodic ones: the Bloch phase
e^{i alpha (x'-x) + i beta (y'-y)} is part of the kernel and the unknown is the
periodic density.

Kernel conventions used throughout (R = x - x', Rvec = (x-x', y-y', z-z')):

- single layer:      G = e^{ikR}/(4 pi R); quadrature carries ds = g dx'dy'.
- double layer:      dG/dn' with the unnormalized source normal
  (-fx', -fy', 1), so the surface element cancels and the quadrature carries
  plain dx'dy':  dG/dn' = (1/R - ik) e^{ikR} (Rvec . n') / (4 pi R^2).
- target-normal derivative (Neumann operator): n(x) . grad_x of the single
  layer divided by g(x); equals minus the double-layer formula with the
  target normal, times g(x')/g(x) from ds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError, WoodAnomalyError
from .lattice import (
    QuasiPeriodicity,
    WindowProfile,
    lattice_indices,
    window_value,
    _psi,
    wood_modes,
)
from .shifted import GrazingSet, ShiftConfig, binomial_weights, grazing_set, validate_shift
from .surface import GratingSurface, SurfaceGrid

__all__ = [
    "QuadratureConfig",
    "CombinedFieldParams",
    "NystromSystem",
    "split_kernel",
    "smooth_layer_apply",
    "singular_layer_apply",
    "fourier_interpolate",
    "assemble",
    "wrap_index",
]

#: Plain-kernel assembly refuses when any |gamma_jl|/k falls below this.
PLAIN_WOOD_TOL = 1e-8

#: Relative accuracy target of the far-image interpolation table.
_TABLE_RTOL = 1e-12

#: Lattice images with max(|m|, |n|) <= this are summed directly per target.
_NEAR_SHELLS = 2


@dataclass(frozen=True)
class QuadratureConfig:
    """Floating partition-of-unity radii and polar grid resolution."""

    r0: float
    r1: float
    n_theta: int
    n_rho: int

    def __post_init__(self):
        if not (0 < self.r0 < self.r1):
            raise ConfigurationError("need 0 < r0 < r1")
        if self.n_theta < 4 or self.n_rho < 4 or self.n_rho % 2 != 0:
            raise ConfigurationError("need n_theta >= 4 and even n_rho >= 4")

    @staticmethod
    def for_grid(grid: SurfaceGrid) -> "QuadratureConfig":
        """Defaults tied to the surface resolution: r1 = min period / 4, r0 = r1/2."""
        r1 = min(grid.surface.d1, grid.surface.d2) / 4.0
        return QuadratureConfig(r0=r1 / 2.0, r1=r1, n_theta=grid.N, n_rho=2 * grid.N)

    def validate_for(self, surface: GratingSurface) -> None:
        if 4.0 * self.r1 > math.hypot(surface.d1, surface.d2) * (1 + 1e-12):
            raise ConfigurationError(
                "partition-of-unity radius violates 4 r1 <= sqrt(d1^2 + d2^2)")


@dataclass(frozen=True)
class CombinedFieldParams:
    """Coupling constants of the combined-field representation xi*DL + i*eta*SL."""

    eta: float
    xi: float = 1.0

    def __post_init__(self):
        if not (self.eta / self.xi < 0):
            raise ConfigurationError("unique solvability requires eta/xi < 0")

    @staticmethod
    def for_wavenumber(k: float) -> "CombinedFieldParams":
        return CombinedFieldParams(eta=-k, xi=1.0)


@dataclass
class NystromSystem:
    """Assembled dense Nystrom operator with its configuration."""

    matrix: np.ndarray
    grid: SurfaceGrid
    qp: QuasiPeriodicity
    kernel: str
    bc: str
    a: float
    window: WindowProfile
    cf: CombinedFieldParams | None
    qc: QuadratureConfig
    sc: ShiftConfig | None = None
    grazing: GrazingSet | None = None


def wrap_index(i, N: int):
    """Periodic wrap of a (possibly negative) node index into [0, N)."""
    return np.mod(i, N)


def _pou(qc: QuadratureConfig, r):
    """Partition-of-unity value at planar radius r: 1 inside r0, 0 outside r1."""
    prof = WindowProfile(inner=qc.r0, outer=qc.r1)
    return _psi(prof, r)


# ---------------------------------------------------------------------------
# reference (slow-path) kernel evaluation
# ---------------------------------------------------------------------------

def _kernel_images(qp: QuasiPeriodicity, w: WindowProfile, a: float):
    """Lattice images of the windowed kernel with their Bloch phases.

    Returns index arrays (padded by half a period so that x-dependent windows
    stay covered for any in-cell planar difference) and the bare phase
    weights; combine with ``_image_weights`` for the window factor at a given
    planar difference.
    """
    mm, nn = lattice_indices(w, a, qp.d1, qp.d2, pad1=qp.d1, pad2=qp.d2)
    if not w.x_dependent:
        chi = window_value(w, mm * qp.d1 / a, nn * qp.d2 / a)
        keep = chi > 0.0
        mm, nn = mm[keep], nn[keep]
    ph = np.exp(-1j * ((qp.alpha * qp.d1) * mm + (qp.beta * qp.d2) * nn))
    return mm, nn, ph


def _image_weights(qp: QuasiPeriodicity, w: WindowProfile, a: float,
                   mm, nn, ph, du: float, dv: float):
    """Window-times-phase weights at planar difference (du, dv).

    With an x-dependent window the truncation follows the actual difference
    vector, which keeps the windowed kernel exactly quasi-periodic in it;
    otherwise the window is pinned to the lattice indices.
    """
    if w.x_dependent:
        chi = window_value(w, (du + mm * qp.d1) / a, (dv + nn * qp.d2) / a)
    else:
        chi = window_value(w, mm * qp.d1 / a, nn * qp.d2 / a)
    return chi * ph


def _v_terms(qp, sc, grazing, du, dv, dz):
    """Regularizer plane-wave terms at the difference vector, as a list."""
    out = []
    for m in grazing:
        amp = (1j / (2.0 * qp.d1 * qp.d2)) * sc.b_value \
            * np.exp(1j * (m.alpha_j * du + m.beta_l * dv)) * np.exp(1j * m.gamma_jl * dz)
        out.append((m, amp))
    return out


def split_kernel(qp: QuasiPeriodicity, surface: GratingSurface, w: WindowProfile,
                 a: float, target, source, kernel: str = "plain", layer: str = "SL",
                 sc: ShiftConfig | None = None, grazing: GrazingSet | None = None):
    """Singular/smooth split of the windowed periodic kernel at one node pair.

    ``target`` and ``source`` are (x, y) parameter pairs; the source may lie
    outside the base cell (unwrapped trapezoid window position).  Returns
    ``(singular, smooth)`` where the singular part is exactly the cos-type
    piece of the central (m = n = 0, q = 0) image and the smooth part is
    everything else: the i sin remainder of the central image, all other
    windowed images, all vertical shifts and (for the modified kernel) the
    regularizer.  Both include the phase-extraction factor.

    ``layer`` is "SL", "DL" (source-normal derivative) or "DLt"
    (target-normal derivative, without the 1/g(target) scaling).  Surface
    element factors are not included; quadrature supplies them.
    """
    if kernel not in ("plain", "shifted", "modified"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if kernel == "plain":
        sc_eff = ShiftConfig(p=0, d=1.0)
        grazing = GrazingSet()
    else:
        if sc is None:
            raise ValueError("shifted/modified kernels need a ShiftConfig")
        sc_eff = sc
        if kernel == "shifted" or grazing is None:
            grazing = GrazingSet() if kernel == "shifted" else grazing_set(qp, sc)
    xt, yt = target
    xs, ys = source
    ft = float(surface.f(xt, yt))
    fs = float(surface.f(xs, ys))
    du, dv, dz = xt - xs, yt - ys, ft - fs
    phase = np.exp(1j * (qp.alpha * (xs - xt) + qp.beta * (ys - yt)))
    mm, nn, ph = _kernel_images(qp, w, a)
    cw = _image_weights(qp, w, a, mm, nn, ph, du, dv)
    apq = binomial_weights(sc_eff.p)
    k = qp.k

    if layer in ("DL",):
        nvec = np.array([-float(surface.fx(xs, ys)), -float(surface.fy(xs, ys)), 1.0])
        sgn = 1.0
    elif layer == "DLt":
        nvec = np.array([-float(surface.fx(xt, yt)), -float(surface.fy(xt, yt)), 1.0])
        sgn = -1.0
    elif layer != "SL":
        raise ValueError(f"unknown layer {layer!r}")

    smooth = 0.0 + 0.0j
    sing = 0.0 + 0.0j
    for q, aq in enumerate(apq):
        X = du + mm * qp.d1
        Y = dv + nn * qp.d2
        Z = dz + q * sc_eff.d
        R = np.sqrt(X * X + Y * Y + Z * Z)
        central = (mm == 0) & (nn == 0) & (q == 0)
        Rsafe = np.where(R > 0, R, 1.0)
        if layer == "SL":
            full = np.exp(1j * k * R) / (4.0 * np.pi * Rsafe)
            sing_term = np.cos(k * R) / (4.0 * np.pi * Rsafe)
            smooth_central = np.where(
                R > 0, 1j * np.sin(k * R) / (4.0 * np.pi * Rsafe),
                1j * k / (4.0 * np.pi))
        else:
            Rn = X * nvec[0] + Y * nvec[1] + Z * nvec[2]
            full = sgn * (1.0 / Rsafe - 1j * k) * np.exp(1j * k * R) * Rn \
                / (4.0 * np.pi * Rsafe**2)
            sing_term = sgn * (np.cos(k * R) + k * R * np.sin(k * R)) * Rn \
                / (4.0 * np.pi * Rsafe**3)
            smooth_central = np.where(
                R > 0,
                sgn * 1j * (np.sin(k * R) / Rsafe - k * np.cos(k * R)) * Rn
                / (4.0 * np.pi * Rsafe**2),
                0.0)
        if np.any(central):
            if np.any((R == 0) & ~central):
                raise ConfigurationError("non-central image collides with target")
            sing += aq * complex(np.sum(cw[central] * sing_term[central]))
            smooth += aq * complex(np.sum(cw[central] * smooth_central[central]))
            smooth += aq * complex(np.sum(cw[~central] * full[~central]))
        else:
            smooth += aq * complex(np.sum(cw * full))
    if kernel == "modified" and len(grazing):
        for m, amp in _v_terms(qp, sc_eff, grazing, du, dv, dz):
            if layer == "SL":
                smooth += amp
            else:
                kvec = 1j * np.array([m.alpha_j, m.beta_l, m.gamma_jl])
                # dG/dn' = -grad(v) . n'; target-normal flavor flips via sgn
                smooth += -sgn * amp * complex(kvec @ nvec.astype(complex))
    return complex(sing * phase), complex(smooth * phase)


# ---------------------------------------------------------------------------
# trigonometric interpolation
# ---------------------------------------------------------------------------

def _fft_modes(N: int) -> np.ndarray:
    """Mode numbers in FFT bin order, with the Nyquist bin taken as +N/2."""
    jm = np.fft.fftfreq(N, 1.0 / N)
    jm[jm == -N // 2] = N // 2
    return jm


def fourier_interpolate(values: np.ndarray, points, d1: float = 1.0, d2: float = 1.0):
    """Evaluate the trigonometric interpolant of grid samples at off-grid points.

    ``values`` is (N, N), sampled at (p d1/N, q d2/N); ``points`` is (P, 2).
    Uses the modes -N/2+1 .. N/2; exact for any resolved trigonometric
    polynomial.
    """
    values = np.asarray(values)
    N = values.shape[0]
    if values.shape != (N, N):
        raise ValueError("values must be a square (N, N) array")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coef = np.fft.fft2(values) / (N * N)
    jm = _fft_modes(N)
    Ex = np.exp(2j * np.pi * np.outer(pts[:, 0], jm) / d1)
    Ey = np.exp(2j * np.pi * np.outer(pts[:, 1], jm) / d2)
    return np.einsum("pj,jl,pl->p", Ex, coef, Ey, optimize=True)


# ---------------------------------------------------------------------------
# polar singular quadrature
# ---------------------------------------------------------------------------

def _polar_grid(qc: QuadratureConfig):
    """Signed-radius polar nodes and weights; endpoint radii are dropped
    because the partition of unity vanishes there."""
    drho = 2.0 * qc.r1 / qc.n_rho
    rho = -qc.r1 + drho * np.arange(1, qc.n_rho)
    theta = np.pi * np.arange(qc.n_theta) / qc.n_theta
    dtheta = np.pi / qc.n_theta
    RHO, TH = np.meshgrid(rho, theta, indexing="ij")
    return RHO.ravel(), TH.ravel(), drho * dtheta


def _polar_weights(grid: SurfaceGrid, qc: QuadratureConfig, qp: QuasiPeriodicity,
                   layer: str):
    """Per-target quadrature weights W[t, p] of the localized singular integral.

    The weight multiplies the density value at polar node p of target t; it
    already contains the partition of unity, the Bloch phase, the surface
    element (single layer and target-normal flavors) and the polar Jacobian.
    The ratio factors |rho|/R and (Rvec . n)/rho^2 are evaluated with their
    analytic rho -> 0 limits on the rho = 0 ring.
    """
    rho, th, wquad = _polar_grid(qc)
    c, s = np.cos(th), np.sin(th)
    T = grid.size
    xt = np.repeat(grid.x, grid.N)
    yt = np.tile(grid.y, grid.N)
    ft = grid.f.ravel()
    fxt = grid.fx.ravel()
    fyt = grid.fy.ravel()
    gt = grid.g.ravel()
    fxxt = grid.fxx.ravel()
    fxyt = grid.fxy.ravel()
    fyyt = grid.fyy.ravel()
    # polar node positions and surface data, (T, P)
    XP = xt[:, None] + rho[None, :] * c[None, :]
    YP = yt[:, None] + rho[None, :] * s[None, :]
    srf = grid.surface
    FP = srf.f(XP, YP)
    dzf = ft[:, None] - FP
    absr = np.abs(rho)[None, :]
    R = np.sqrt(rho[None, :] ** 2 + dzf * dzf)
    on_axis = rho == 0.0
    # |rho| / R with its limit 1 / sqrt(1 + (fx c + fy s)^2) at rho = 0
    slope_t = fxt[:, None] * c[None, :] + fyt[:, None] * s[None, :]
    ratio = np.where(on_axis[None, :], 1.0 / np.sqrt(1.0 + slope_t**2),
                     absr / np.where(R > 0, R, 1.0))
    kR = qp.k * R
    eta_pou = _pou(qc, np.abs(rho))[None, :]
    phase = np.exp(1j * (qp.alpha * (XP - xt[:, None]) + qp.beta * (YP - yt[:, None])))
    curv_t = fxxt[:, None] * c[None, :] ** 2 + 2.0 * fxyt[:, None] * c[None, :] * s[None, :] \
        + fyyt[:, None] * s[None, :] ** 2
    if layer == "SL":
        GP = np.sqrt(srf.fx(XP, YP) ** 2 + srf.fy(XP, YP) ** 2 + 1.0)
        W = np.cos(kR) * ratio * GP * eta_pou * phase / (4.0 * np.pi) * wquad
    elif layer == "DL":
        # (Rvec . n') / rho^2 -> curvature/2 at rho = 0 (target curvature)
        FXP = srf.fx(XP, YP)
        FYP = srf.fy(XP, YP)
        Rn_over = np.where(
            on_axis[None, :], 0.5 * curv_t,
            (rho[None, :] * c[None, :] * FXP + rho[None, :] * s[None, :] * FYP + dzf)
            / np.where(rho[None, :] != 0, rho[None, :] ** 2, 1.0))
        W = (np.cos(kR) + kR * np.sin(kR)) * ratio**3 * Rn_over * eta_pou * phase \
            / (4.0 * np.pi) * wquad
    elif layer == "DLt":
        GP = np.sqrt(srf.fx(XP, YP) ** 2 + srf.fy(XP, YP) ** 2 + 1.0)
        Rn_over = np.where(
            on_axis[None, :], -0.5 * curv_t,
            (rho[None, :] * (c[None, :] * fxt[:, None] + s[None, :] * fyt[:, None]) + dzf)
            / np.where(rho[None, :] != 0, rho[None, :] ** 2, 1.0))
        W = -(np.cos(kR) + kR * np.sin(kR)) * ratio**3 * Rn_over * GP \
            * eta_pou * phase / (4.0 * np.pi) * wquad / gt[:, None]
    else:
        raise ValueError(f"unknown layer {layer!r}")
    return W, rho, th


def _polar_matrix(grid: SurfaceGrid, qc: QuadratureConfig, qp: QuasiPeriodicity,
                  W: np.ndarray, rho: np.ndarray, th: np.ndarray) -> np.ndarray:
    """Dense (T, T) matrix of the localized singular operator from its weights.

    The density at each polar node is the trigonometric interpolant of the
    grid values; since the polar offsets are shared by all targets, the
    interpolation collapses to one matrix product plus a small inverse FFT and
    circular shift per target.
    """
    N = grid.N
    T = grid.size
    jm = _fft_modes(N)
    offx = rho * np.cos(th)
    offy = rho * np.sin(th)
    Cx = np.exp(2j * np.pi * np.outer(offx, jm) / grid.surface.d1)
    Cy = np.exp(2j * np.pi * np.outer(offy, jm) / grid.surface.d2)
    CC = (Cx[:, :, None] * Cy[:, None, :]).reshape(len(rho), N * N)
    X = (W @ CC).reshape(T, N, N)
    rows = np.fft.ifft2(X, axes=(1, 2))  # value per node-offset (ot, oq)
    pt = np.repeat(np.arange(N), N)
    qt = np.tile(np.arange(N), N)
    op = wrap_index(pt[:, None] - np.arange(N)[None, :], N)
    oq = wrap_index(qt[:, None] - np.arange(N)[None, :], N)
    mat = rows[np.arange(T)[:, None, None], op[:, :, None], oq[:, None, :]]
    return mat.reshape(T, T)


def singular_layer_apply(grid: SurfaceGrid, density: np.ndarray, qc: QuadratureConfig,
                         qp: QuasiPeriodicity, layer: str = "SL") -> np.ndarray:
    """Localized singular-part integral at every node for a grid density."""
    qc.validate_for(grid.surface)
    W, rho, th = _polar_weights(grid, qc, qp, layer)
    mat = _polar_matrix(grid, qc, qp, W, rho, th)
    return mat @ np.asarray(density).ravel()


# ---------------------------------------------------------------------------
# fast trapezoidal assembly
# ---------------------------------------------------------------------------

def _chebyshev_nodes(n: int, lo: float, hi: float):
    """First-kind Chebyshev nodes on [lo, hi] and the node-to-coefficient map."""
    i = np.arange(n)
    xk = np.cos(np.pi * (2 * i + 1) / (2 * n))
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xk
    dct = 2.0 / n * np.cos(np.pi * np.outer(np.arange(n), 2 * i + 1) / (2 * n))
    dct[0] *= 0.5
    return nodes, dct


class _FarTable:
    """Chebyshev-in-delta interpolation of the far-image kernel sums.

    For a fixed planar offset the sums over far lattice images are analytic in
    the vertical separation delta on the evaluation interval; tabulating them
    at Chebyshev nodes and re-expanding makes the per-target cost independent
    of the image count.  The node count is calibrated once per assembly
    against direct summation at the worst-case planar offset.
    """

    def __init__(self, k, dxf, dyf, lo, hi, n):
        self.k = k
        self.dxf = dxf
        self.dyf = dyf
        self.lo = lo
        self.hi = hi
        self.n = n
        self.nodes, self.dct = _chebyshev_nodes(n, lo, hi)

    def coefficients(self, u, v, cwf):
        dx = self.dxf + u
        dy = self.dyf + v
        P = dx * dx + dy * dy
        F = _kernels.image_sums(P, dx, dy, cwf, self.k, self.nodes)
        vals = np.stack(F, axis=1)  # (n, 4)
        return self.dct @ vals  # (n, 4) Chebyshev coefficients

    def evaluate(self, coef, deltas):
        xs = (2.0 * deltas - (self.lo + self.hi)) / (self.hi - self.lo)
        out = np.polynomial.chebyshev.chebval(xs, coef, tensor=True)
        return out  # (4, len(deltas))


def _calibrate_far_table(k, dxf, dyf, cwf, lo, hi, u0, v0, rng_seed=12345):
    """Grow the Chebyshev node count until the table matches direct sums."""
    rng = np.random.default_rng(rng_seed)
    test = lo + (hi - lo) * rng.random(24)
    dx = dxf + u0
    dy = dyf + v0
    P = dx * dx + dy * dy
    ref = np.stack(_kernels.image_sums(P, dx, dy, cwf, k, test), axis=0)
    scale = np.max(np.abs(ref)) + 1e-300
    n = 48
    while True:
        table = _FarTable(k, dxf, dyf, lo, hi, n)
        coef = table.coefficients(u0, v0, cwf)
        err = np.max(np.abs(table.evaluate(coef, test) - ref)) / scale
        if err <= _TABLE_RTOL or n >= 768:
            return n
        n = int(n * 1.5)


def _assembly_layers(qp: QuasiPeriodicity, grid: SurfaceGrid, qc: QuadratureConfig,
                     w: WindowProfile, a: float, sc_eff: ShiftConfig,
                     grazing: GrazingSet, layers: tuple[str, ...]):
    """Dense matrices of the requested layer operators (trapezoid + polar).

    Shares one pass over planar offsets between the layers: the per-offset
    image sums provide the monopole sum and the three gradient components,
    from which SL, DL and DLt entries are all linear combinations.
    """
    N = grid.N
    T = grid.size
    d1, d2 = grid.surface.d1, grid.surface.d2
    h1, h2 = d1 / N, d2 / N
    k = qp.k
    apq = binomial_weights(sc_eff.p)
    qs = np.arange(sc_eff.p + 1)

    mm, nn, ph_im = _kernel_images(qp, w, a)
    near = (np.abs(mm) <= _NEAR_SHELLS) & (np.abs(nn) <= _NEAR_SHELLS) \
        & ~((mm == 0) & (nn == 0))
    far = ~near & ~((mm == 0) & (nn == 0))
    dxn0, dyn0 = mm[near] * d1, nn[near] * d2
    dxf0, dyf0 = mm[far] * d1, nn[far] * d2

    ft = grid.f.ravel()
    fxs_all = grid.fx.ravel()
    fys_all = grid.fy.ravel()
    gs_all = grid.g.ravel()
    gt = gs_all
    fxt = fxs_all
    fyt = fys_all
    pt = np.repeat(np.arange(N), N)
    qt = np.tile(np.arange(N), N)

    fmin, fmax = float(np.min(grid.f)), float(np.max(grid.f))
    span = max(fmax - fmin, 1e-3)
    lo = (fmin - fmax) - 0.05 * span
    hi = (fmax - fmin) + sc_eff.p * sc_eff.d + 0.05 * span

    use_far = len(dxf0) > 0
    if use_far:
        u0, v0 = -d1 / 2.0, -d2 / 2.0
        cwf0 = _image_weights(qp, w, a, mm, nn, ph_im, u0, v0)[far]
        ncheb = _calibrate_far_table(k, dxf0, dyf0, cwf0, lo, hi, u0, v0)
        table = _FarTable(k, dxf0, dyf0, lo, hi, ncheb)

    mats = {layer: np.zeros((T, T), dtype=complex) for layer in layers}
    rows = np.arange(T)
    half = N // 2
    wts = np.where(np.abs(np.arange(-half, half + 1)) == half, 0.5, 1.0)

    vmodes = [(m.alpha_j, m.beta_l, m.gamma_jl,
               (1j / (2.0 * d1 * d2)) * sc_eff.b_value) for m in grazing]

    for ir, r in enumerate(range(-half, half + 1)):
        for is_, s_ in enumerate(range(-half, half + 1)):
            u = -r * h1
            v = -s_ * h2
            cw_off = _image_weights(qp, w, a, mm, nn, ph_im, u, v)
            sflat = wrap_index(pt + r, N) * N + wrap_index(qt + s_, N)
            deltas = ft - ft[sflat]
            dall = (deltas[:, None] + (qs * sc_eff.d)[None, :]).ravel()
            # near images, all shifts, direct summation
            if len(dxn0):
                Fn = _kernels.image_sums(
                    (dxn0 + u) ** 2 + (dyn0 + v) ** 2, dxn0 + u, dyn0 + v,
                    cw_off[near], k, dall)
                Fn = [f.reshape(T, len(qs)) @ apq for f in Fn]
            else:
                Fn = [np.zeros(T, dtype=complex)] * 4
            # far images through the Chebyshev table
            if use_far:
                coef = table.coefficients(u, v, cw_off[far])
                Ff = table.evaluate(coef, dall)
                Ff = [Ff[i].reshape(T, len(qs)) @ apq for i in range(4)]
            else:
                Ff = [np.zeros(T, dtype=complex)] * 4
            F0 = Fn[0] + Ff[0]
            F1x = Fn[1] + Ff[1]
            F1y = Fn[2] + Ff[2]
            F1z = Fn[3] + Ff[3]
            # central image: q >= 1 shifts are separated and fully smooth
            P0 = u * u + v * v
            for q in range(1, sc_eff.p + 1):
                Z = deltas + q * sc_eff.d
                R = np.sqrt(P0 + Z * Z)
                e = apq[q] * np.exp(1j * k * R) / R
                F0 += e
                b = e * (1.0 / R - 1j * k) / R
                F1x += b * u
                F1y += b * v
                F1z += b * Z
            # central image q = 0: i sin remainder (the cos part is singular)
            Rc = np.sqrt(P0 + deltas * deltas)
            Rcs = np.where(Rc > 0, Rc, 1.0)
            sl_c = np.where(Rc > 0, 1j * np.sin(k * Rc) / Rcs, 1j * k)
            bc_ = np.where(Rc > 0, 1j * (np.sin(k * Rc) / Rcs - k * np.cos(k * Rc))
                           / Rcs**2, 0.0)
            F0 += sl_c
            F1x += bc_ * u
            F1y += bc_ * v
            F1z += bc_ * deltas
            phase = np.exp(-1j * (qp.alpha * u + qp.beta * v))
            trapw = wts[ir] * wts[is_] * (h1 * h2)
            fxs = fxs_all[sflat]
            fys = fys_all[sflat]
            gs = gs_all[sflat]
            # singular central piece, weighted by (1 - pou); offset 0 has pou = 1
            rho_off = math.hypot(u, v)
            one_minus = 1.0 - float(_pou(qc, np.array([rho_off]))[0])
            if one_minus > 0.0 and rho_off > 0.0:
                cosf = np.cos(k * Rc)
                sl_sing = cosf / Rcs
                dl_base = (cosf + k * Rc * np.sin(k * Rc)) / Rcs**3
            else:
                sl_sing = None
            for layer in layers:
                if layer == "SL":
                    ent = F0 / (4.0 * np.pi)
                    if sl_sing is not None:
                        ent = ent + one_minus * sl_sing / (4.0 * np.pi)
                    for ajm, blm, gjm, ampm in vmodes:
                        vfac = ampm * np.exp(1j * (ajm * u + blm * v))
                        ent = ent + vfac * np.exp(1j * gjm * deltas)
                    ent = ent * (phase * trapw) * gs
                elif layer == "DL":
                    ent = (F1x * (-fxs) + F1y * (-fys) + F1z) / (4.0 * np.pi)
                    if sl_sing is not None:
                        Rn = u * (-fxs) + v * (-fys) + deltas
                        ent = ent + one_minus * dl_base * Rn / (4.0 * np.pi)
                    for ajm, blm, gjm, ampm in vmodes:
                        # d/dn' of the plane wave in (x - x'): -(i kvec).n'
                        vfac = ampm * np.exp(1j * (ajm * u + blm * v))
                        ent = ent - vfac * np.exp(1j * gjm * deltas) \
                            * 1j * (ajm * (-fxs) + blm * (-fys) + gjm)
                    ent = ent * (phase * trapw)
                elif layer == "DLt":
                    ent = -(F1x * (-fxt) + F1y * (-fyt) + F1z) / (4.0 * np.pi)
                    if sl_sing is not None:
                        Rn = u * (-fxt) + v * (-fyt) + deltas
                        ent = ent - one_minus * dl_base * Rn / (4.0 * np.pi)
                    for ajm, blm, gjm, ampm in vmodes:
                        vfac = ampm * np.exp(1j * (ajm * u + blm * v))
                        ent = ent + vfac * np.exp(1j * gjm * deltas) \
                            * 1j * (ajm * (-fxt) + blm * (-fyt) + gjm)
                    ent = ent * (phase * trapw) * gs / gt
                mats[layer][rows, sflat] += ent
    # localized singular parts
    for layer in layers:
        W, rho, th = _polar_weights(grid, qc, qp, layer)
        mats[layer] += _polar_matrix(grid, qc, qp, W, rho, th)
    return mats


def smooth_layer_apply(grid: SurfaceGrid, density: np.ndarray, qp: QuasiPeriodicity,
                       w: WindowProfile, a: float, kernel: str = "plain",
                       layer: str = "SL", sc: ShiftConfig | None = None,
                       grazing: GrazingSet | None = None) -> np.ndarray:
    """Trapezoid sum of the smooth kernel part over the period-centered window.

    Slow reference path built on ``split_kernel``; quadratic in the node
    count and intended for modest N.  Includes the surface element for the
    single layer and the window's trapezoid end weights.
    """
    N = grid.N
    phi = np.asarray(density).ravel()
    d1, d2 = grid.surface.d1, grid.surface.d2
    h1, h2 = d1 / N, d2 / N
    half = N // 2
    wts = np.where(np.abs(np.arange(-half, half + 1)) == half, 0.5, 1.0)
    out = np.zeros(grid.size, dtype=complex)
    pt = np.repeat(np.arange(N), N)
    qt = np.tile(np.arange(N), N)
    gs_all = grid.g.ravel()
    for tflat in range(grid.size):
        xt_ = grid.x[pt[tflat]]
        yt_ = grid.y[qt[tflat]]
        acc = 0.0 + 0.0j
        for ir, r in enumerate(range(-half, half + 1)):
            for is_, s_ in enumerate(range(-half, half + 1)):
                sp = wrap_index(pt[tflat] + r, N)
                sq = wrap_index(qt[tflat] + s_, N)
                sflat = sp * N + sq
                xs_ = xt_ + r * h1
                ys_ = yt_ + s_ * h2
                _, sm = split_kernel(qp, grid.surface, w, a, (xt_, yt_), (xs_, ys_),
                                     kernel=kernel, layer=layer, sc=sc, grazing=grazing)
                val = sm * phi[sflat] * wts[ir] * wts[is_] * h1 * h2
                if layer in ("SL", "DLt"):
                    val *= gs_all[sflat]
                acc += val
        if layer == "DLt":
            acc /= gs_all[tflat]
        out[tflat] = acc
    return out


def assemble(qp: QuasiPeriodicity, surface: GratingSurface, grid: SurfaceGrid,
             qc: QuadratureConfig | None = None, cf: CombinedFieldParams | None = None,
             kernel: str = "plain", a: float = 40.0,
             sc: ShiftConfig | None = None, w: WindowProfile | None = None,
             bc: str = "dirichlet", grazing: GrazingSet | None = None) -> NystromSystem:
    """Assemble the dense Nystrom matrix of the periodic integral equation.

    Dirichlet: xi/2 I + xi DL + i eta SL acting on the periodic density.
    Neumann:   -1/2 I + target-normal derivative of the single layer.

    The plain kernel refuses Wood configurations; the shifted and modified
    kernels require a ShiftConfig whose distance clears both the surface
    height range and the far-field degeneracy check.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if kernel not in ("plain", "shifted", "modified"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if w is None:
        w = WindowProfile(x_dependent=True)
    if qc is None:
        qc = QuadratureConfig.for_grid(grid)
    qc.validate_for(surface)
    if bc == "dirichlet" and cf is None:
        cf = CombinedFieldParams.for_wavenumber(qp.k)

    if kernel == "plain":
        bad = wood_modes(qp, j_max=int(math.ceil(
            (qp.k + abs(qp.alpha) + abs(qp.beta)) * max(qp.d1, qp.d2) / (2 * np.pi))) + 1,
            grazing_tol=PLAIN_WOOD_TOL)
        if bad:
            names = ", ".join(f"({m.j},{m.l})" for m in bad)
            raise WoodAnomalyError(
                f"plain kernel at a Wood configuration (grazing modes {names}); "
                "use kernel='shifted' or 'modified'")
        sc_eff = ShiftConfig(p=0, d=1.0)
        grazing = GrazingSet()
    else:
        if sc is None:
            raise ConfigurationError("shifted/modified kernels need a ShiftConfig")
        sc_eff = sc
        validate_shift(qp, sc_eff)
        fr = float(np.max(grid.f) - np.min(grid.f))
        if sc_eff.p >= 1 and sc_eff.d <= fr:
            raise ConfigurationError(
                f"shift distance d = {sc_eff.d} must exceed the surface height range {fr}")
        if kernel == "modified":
            if grazing is None:
                grazing = grazing_set(qp, sc_eff)
        else:
            grazing = GrazingSet()

    layers = ("DLt",) if bc == "neumann" else ("SL", "DL")
    mats = _assembly_layers(qp, grid, qc, w, a, sc_eff, grazing, layers)
    if bc == "dirichlet":
        A = 1j * cf.eta * mats["SL"] + cf.xi * mats["DL"]
        A[np.diag_indices_from(A)] += cf.xi / 2.0
    else:
        A = mats["DLt"].copy()
        A[np.diag_indices_from(A)] += -0.5
    return NystromSystem(matrix=A, grid=grid, qp=qp, kernel=kernel, bc=bc, a=a,
                         window=w, cf=cf, qc=qc, sc=(None if kernel == "plain" else sc),
                         grazing=grazing)
