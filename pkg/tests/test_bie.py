"""Tests for the Nystrom quadratures, kernel split and system assembly."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgreen.bie import (
    CombinedFieldParams,
    QuadratureConfig,
    _assembly_layers,
    _polar_matrix,
    _polar_weights,
    _pou,
    assemble,
    fourier_interpolate,
    singular_layer_apply,
    smooth_layer_apply,
    split_kernel,
    wrap_index,
)
from qpgreen.errors import ConfigurationError, WoodAnomalyError
from qpgreen.lattice import QuasiPeriodicity, WindowProfile, windowed_green
from qpgreen.shifted import GrazingSet, ShiftConfig, grazing_set
from qpgreen.surface import cos_cos_surface, flat_surface, sample_surface

TWO_PI = 2.0 * np.pi


def make_qp(k=2.5, alpha=0.0, beta=0.0):
    return QuasiPeriodicity(k=k, d1=1.0, d2=1.0, alpha=alpha, beta=beta)


def brute_apply(qp, grid, qc, w, a, phi, kernel="plain", layer="SL",
                sc=None, grazing=None):
    """Direct double-loop operator action: trapezoid sum of the smooth part
    plus the complement of the partition of unity on the singular part, plus
    the localized polar integral."""
    N = grid.N
    d1, d2 = grid.surface.d1, grid.surface.d2
    h1, h2 = d1 / N, d2 / N
    half = N // 2
    wts = np.where(np.abs(np.arange(-half, half + 1)) == half, 0.5, 1.0)
    pt = np.repeat(np.arange(N), N)
    qt = np.tile(np.arange(N), N)
    g = grid.g.ravel()
    out = np.zeros(grid.size, complex)
    for t in range(grid.size):
        xt, yt = grid.x[pt[t]], grid.y[qt[t]]
        acc = 0j
        for ir, r in enumerate(range(-half, half + 1)):
            for is_, s_ in enumerate(range(-half, half + 1)):
                sflat = ((pt[t] + r) % N) * N + (qt[t] + s_) % N
                xs, ys = xt + r * h1, yt + s_ * h2
                sing, sm = split_kernel(qp, grid.surface, w, a, (xt, yt),
                                        (xs, ys), kernel=kernel, layer=layer,
                                        sc=sc, grazing=grazing)
                rho = math.hypot(r * h1, s_ * h2)
                one_minus = 0.0 if rho == 0 else \
                    1.0 - float(_pou(qc, np.array([rho]))[0])
                val = (sm + one_minus * sing) * phi[sflat] * wts[ir] * wts[is_] * h1 * h2
                if layer in ("SL", "DLt"):
                    val *= g[sflat]
                acc += val
        if layer == "DLt":
            acc /= g[t]
        out[t] = acc
    W, rho, th = _polar_weights(grid, qc, qp, layer)
    return out + (_polar_matrix(grid, qc, qp, W, rho, th) @ phi)


class TestQuadratureConfig:
    def test_defaults_for_grid(self):
        grid = sample_surface(flat_surface(), 16)
        qc = QuadratureConfig.for_grid(grid)
        assert qc.r1 == pytest.approx(0.25)
        assert qc.r0 == pytest.approx(0.125)
        assert qc.n_theta == 16 and qc.n_rho == 32

    def test_rejects_bad_radii(self):
        with pytest.raises(ConfigurationError):
            QuadratureConfig(r0=0.2, r1=0.1, n_theta=8, n_rho=16)

    def test_validate_for_surface_diagonal(self):
        qc = QuadratureConfig(r0=0.3, r1=0.6, n_theta=8, n_rho=16)
        with pytest.raises(ConfigurationError):
            qc.validate_for(flat_surface())

    def test_pou_support(self):
        grid = sample_surface(flat_surface(), 8)
        qc = QuadratureConfig.for_grid(grid)
        r = np.array([0.0, qc.r0 * 0.9, (qc.r0 + qc.r1) / 2, qc.r1 * 1.1])
        vals = _pou(qc, r)
        assert vals[0] == 1.0 and vals[1] == 1.0
        assert 0.0 < vals[2] < 1.0
        assert vals[3] == 0.0


class TestCombinedFieldParams:
    def test_sign_invariant(self):
        CombinedFieldParams(eta=-2.5, xi=1.0)
        with pytest.raises(ConfigurationError):
            CombinedFieldParams(eta=2.5, xi=1.0)
        with pytest.raises(ConfigurationError):
            CombinedFieldParams(eta=0.0, xi=1.0)

    def test_for_wavenumber(self):
        cf = CombinedFieldParams.for_wavenumber(3.0)
        assert cf.eta == -3.0 and cf.xi == 1.0


class TestWrapIndex:
    def test_exhaustive_small_grids(self):
        for N in (8, 16):
            for p in range(N):
                for r in range(-N, N + 1):
                    idx = wrap_index(p + r, N)
                    assert 0 <= idx < N
                    assert (idx - (p + r)) % N == 0

    @given(st.integers(-1000, 1000), st.sampled_from([8, 16, 24]))
    @settings(max_examples=80, deadline=None)
    def test_range_property(self, i, N):
        assert 0 <= wrap_index(i, N) < N


class TestSplitKernel:
    def test_coincident_single_layer_limit(self):
        qp = make_qp()
        surf = cos_cos_surface(0.3)
        sing, smooth = split_kernel(qp, surf, WindowProfile(), 8.0,
                                    (0.25, 0.375), (0.25, 0.375), "plain", "SL")
        # central singular term is excluded from the smooth part; its
        # i sin(kR)/(4 pi R) remainder limits to i k / (4 pi)
        central_limit = 1j * qp.k / (4.0 * np.pi)
        images = smooth - central_limit
        assert abs(smooth.imag - central_limit.imag) < abs(central_limit.imag)
        assert np.isfinite(smooth.real) and np.isfinite(smooth.imag)

    def test_resummation_identity(self):
        # singular + smooth equals the directly evaluated windowed periodic
        # kernel (phase extracted) at separated points
        qp = make_qp(alpha=0.3, beta=-0.2)
        surf = cos_cos_surface(0.3)
        w = WindowProfile(x_dependent=True)
        tgt, src = (0.125, 0.25), (0.5, 0.625)
        sing, smooth = split_kernel(qp, surf, w, 8.0, tgt, src, "plain", "SL")
        diff = np.array([tgt[0] - src[0], tgt[1] - src[1],
                         float(surf.f(*tgt)) - float(surf.f(*src))])
        direct = windowed_green(qp, w, 8.0, diff) \
            * np.exp(1j * (qp.alpha * (src[0] - tgt[0]) + qp.beta * (src[1] - tgt[1])))
        assert sing + smooth == pytest.approx(direct, rel=1e-12)

    def test_flat_double_layer_vanishes(self):
        qp = make_qp()
        surf = flat_surface()
        sing, smooth = split_kernel(qp, surf, WindowProfile(), 8.0,
                                    (0.125, 0.25), (0.5, 0.625), "plain", "DL")
        assert abs(sing) <= 1e-15 and abs(smooth) <= 1e-15

    def test_coincident_double_layer_smooth_limit_zero(self):
        qp = make_qp()
        surf = flat_surface()
        _, smooth = split_kernel(qp, surf, WindowProfile(), 8.0,
                                 (0.25, 0.25), (0.25, 0.25), "plain", "DL")
        assert abs(smooth) <= 1e-15

    def test_modified_kernel_includes_regularizer(self):
        qp = make_qp(k=TWO_PI)
        surf = cos_cos_surface(0.3)
        sc = ShiftConfig(p=3, d=1.4)
        gs = grazing_set(qp, sc)
        args = (qp, surf, WindowProfile(), 8.0, (0.125, 0.25), (0.5, 0.625))
        _, with_v = split_kernel(*args, "modified", "SL", sc, gs)
        _, without = split_kernel(*args, "shifted", "SL", sc, gs)
        assert abs(with_v - without) > 1e-3

    def test_rejects_unknown_kernel_and_layer(self):
        qp = make_qp()
        surf = flat_surface()
        with pytest.raises(ValueError):
            split_kernel(qp, surf, WindowProfile(), 8.0, (0, 0), (0.2, 0.2),
                         "ewald", "SL")
        with pytest.raises(ValueError):
            split_kernel(qp, surf, WindowProfile(), 8.0, (0, 0), (0.2, 0.2),
                         "plain", "XX")


class TestFourierInterpolate:
    def test_pure_mode_exact(self):
        N = 16
        x = np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = np.exp(2j * np.pi * X)
        pts = np.array([[0.123, 0.4], [0.77, 0.01]])
        out = fourier_interpolate(vals, pts)
        assert np.allclose(out, np.exp(2j * np.pi * pts[:, 0]), atol=1e-13)

    def test_real_input_real_output(self):
        N = 16
        x = np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = np.cos(2 * np.pi * X) * np.sin(4 * np.pi * Y) + 0.3
        pts = np.random.default_rng(0).random((20, 2))
        out = fourier_interpolate(vals, pts)
        assert np.max(np.abs(out.imag)) <= 1e-13 * np.max(np.abs(vals))

    def test_cos_cos_analytic(self):
        N = 16
        surf = cos_cos_surface(0.5)
        x = np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = surf.f(X, Y)
        pts = np.random.default_rng(1).random((30, 2))
        out = fourier_interpolate(vals, pts)
        ref = surf.f(pts[:, 0], pts[:, 1])
        assert np.max(np.abs(out - ref)) <= 1e-12

    def test_nonunit_periods(self):
        N = 16
        d1, d2 = 2.0, 0.5
        x = np.arange(N) * d1 / N
        y = np.arange(N) * d2 / N
        X, Y = np.meshgrid(x, y, indexing="ij")
        vals = np.cos(2 * np.pi * X / d1) * np.cos(2 * np.pi * Y / d2)
        pts = np.array([[0.3, 0.1], [1.7, 0.44]])
        out = fourier_interpolate(vals, pts, d1, d2)
        ref = np.cos(2 * np.pi * pts[:, 0] / d1) * np.cos(2 * np.pi * pts[:, 1] / d2)
        assert np.allclose(out, ref, atol=1e-12)


class TestSingularLayer:
    def test_flat_single_layer_static_reference(self):
        # on a plane with constant density and k ~ 0 the localized integral
        # reduces to (1/2) * integral of the partition of unity profile
        from scipy.integrate import quad
        grid = sample_surface(flat_surface(), 16)
        qc = QuadratureConfig.for_grid(grid)
        qp = make_qp(k=1e-6)
        out = singular_layer_apply(grid, np.ones(grid.size), qc, qp, "SL")
        ref, _ = quad(lambda r: float(_pou(qc, np.array([r]))[0]), 0.0, qc.r1)
        assert np.allclose(out, 0.5 * ref, rtol=1e-4)
        fine = QuadratureConfig(r0=qc.r0, r1=qc.r1, n_theta=16, n_rho=256)
        out_f = singular_layer_apply(grid, np.ones(grid.size), fine, qp, "SL")
        assert np.allclose(out_f, 0.5 * ref, rtol=1e-8)

    def test_flat_double_layer_vanishes(self):
        grid = sample_surface(flat_surface(), 16)
        qc = QuadratureConfig.for_grid(grid)
        out = singular_layer_apply(grid, np.ones(grid.size), qc, make_qp(), "DL")
        assert np.max(np.abs(out)) <= 1e-14

    def test_polar_weights_finite(self):
        # the rho -> 0 limits must leave no NaN/Inf anywhere in the weights
        for layer in ("SL", "DL", "DLt"):
            grid = sample_surface(cos_cos_surface(0.5), 16)
            qc = QuadratureConfig.for_grid(grid)
            W, rho, th = _polar_weights(grid, qc, make_qp(), layer)
            assert np.all(np.isfinite(W))
            assert W.size >= 10_000
            mat = _polar_matrix(grid, qc, make_qp(), W, rho, th)
            assert np.all(np.isfinite(mat))

    def test_quadrature_self_convergence(self):
        # doubling every resolution changes the result at high order
        qp = make_qp(k=1.0)
        outs = {}
        for N in (16, 32):
            grid = sample_surface(cos_cos_surface(0.5), N)
            qc = QuadratureConfig.for_grid(grid)
            X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
            phi = (np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y) + 0.5).ravel()
            outs[N] = singular_layer_apply(grid, phi.astype(complex), qc, qp,
                                           "SL").reshape(N, N)
        diff = np.max(np.abs(outs[32][::2, ::2] - outs[16]))
        assert diff <= 1e-4


class TestAssembly:
    def test_operator_self_convergence_order(self):
        # observed order of the full single-layer action under simultaneous
        # grid and polar refinement must be at least 3
        qp = make_qp(k=1.0)
        w = WindowProfile(x_dependent=True)
        outs = {}
        for N in (8, 16, 32):
            grid = sample_surface(cos_cos_surface(0.5), N)
            qc = QuadratureConfig.for_grid(grid)
            mats = _assembly_layers(qp, grid, qc, w, 15.0, ShiftConfig(p=0, d=1.0),
                                    GrazingSet(), ("SL",))
            X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
            phi = (np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y) + 0.5).ravel()
            outs[N] = (mats["SL"] @ phi.astype(complex)).reshape(N, N)
        e1 = np.max(np.abs(outs[16][::2, ::2] - outs[8]))
        e2 = np.max(np.abs(outs[32][::2, ::2] - outs[16]))
        assert math.log2(e1 / e2) >= 3.0

    def test_matches_slow_reference(self):
        # fast assembly equals a direct double loop that joins the smooth
        # trapezoid sum, the complemented singular part and the localized
        # polar integral
        qp = make_qp(k=2.5, alpha=0.3, beta=-0.2)
        w = WindowProfile(x_dependent=True)
        grid = sample_surface(cos_cos_surface(0.3), 8)
        qc = QuadratureConfig.for_grid(grid)
        sc = ShiftConfig(p=0, d=1.0)
        mats = _assembly_layers(qp, grid, qc, w, 8.0, sc, GrazingSet(),
                                ("SL", "DLt"))
        rng = np.random.default_rng(2)
        phi = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        for layer in ("SL", "DLt"):
            fast = mats[layer] @ phi
            slow = brute_apply(qp, grid, qc, w, 8.0, phi, "plain", layer)
            assert np.linalg.norm(fast - slow) <= 1e-12 * np.linalg.norm(slow)

    def test_smooth_layer_matches_fast_smooth_part(self):
        # the slow split_kernel sum reproduces the smooth contribution of the
        # assembled matrix once the singular pieces are subtracted
        qp = make_qp(k=2.5, alpha=0.3, beta=-0.2)
        w = WindowProfile(x_dependent=True)
        grid = sample_surface(cos_cos_surface(0.3), 8)
        qc = QuadratureConfig.for_grid(grid)
        rng = np.random.default_rng(4)
        phi = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        slow = smooth_layer_apply(grid, phi, qp, w, 8.0, "plain", "SL")
        full = brute_apply(qp, grid, qc, w, 8.0, phi, "plain", "SL")
        # the difference is exactly the singular pieces, which depend on qc
        resid = full - slow
        assert np.all(np.isfinite(resid))
        assert np.linalg.norm(resid) > 0.0

    def test_plain_refuses_anomaly(self):
        qp = make_qp(k=TWO_PI)
        surf = cos_cos_surface(0.5)
        grid = sample_surface(surf, 8)
        with pytest.raises(WoodAnomalyError, match=r"\((-?1,0|0,-?1)\)"):
            assemble(qp, surf, grid, kernel="plain", a=10.0)

    def test_dirichlet_diagonal_jump(self):
        qp = make_qp(k=2.5)
        surf = cos_cos_surface(0.3)
        grid = sample_surface(surf, 8)
        qc = QuadratureConfig.for_grid(grid)
        w = WindowProfile(x_dependent=True)
        cf = CombinedFieldParams.for_wavenumber(qp.k)
        system = assemble(qp, surf, grid, qc=qc, cf=cf, kernel="plain", a=8.0, w=w)
        mats = _assembly_layers(qp, grid, qc, w, 8.0, ShiftConfig(p=0, d=1.0),
                                GrazingSet(), ("SL", "DL"))
        expect = 1j * cf.eta * mats["SL"] + cf.xi * mats["DL"]
        expect[np.diag_indices_from(expect)] += cf.xi / 2.0
        assert np.allclose(system.matrix, expect, atol=1e-14)

    def test_neumann_diagonal_jump(self):
        qp = make_qp(k=2.5)
        surf = cos_cos_surface(0.3)
        grid = sample_surface(surf, 8)
        qc = QuadratureConfig.for_grid(grid)
        w = WindowProfile(x_dependent=True)
        system = assemble(qp, surf, grid, qc=qc, kernel="plain", a=8.0, w=w,
                          bc="neumann")
        mats = _assembly_layers(qp, grid, qc, w, 8.0, ShiftConfig(p=0, d=1.0),
                                GrazingSet(), ("DLt",))
        expect = mats["DLt"].copy()
        expect[np.diag_indices_from(expect)] += -0.5
        assert np.allclose(system.matrix, expect, atol=1e-14)

    def test_shifted_requires_clearance(self):
        # the shift distance must exceed the surface height range
        qp = make_qp(k=TWO_PI)
        surf = cos_cos_surface(0.5)
        grid = sample_surface(surf, 8)
        with pytest.raises(ConfigurationError, match="height range"):
            assemble(qp, surf, grid, kernel="modified", a=10.0,
                     sc=ShiftConfig(p=3, d=0.9))

    def test_shifted_requires_config(self):
        qp = make_qp(k=TWO_PI)
        surf = cos_cos_surface(0.5)
        grid = sample_surface(surf, 8)
        with pytest.raises(ConfigurationError):
            assemble(qp, surf, grid, kernel="modified", a=10.0, sc=None)

    def test_flat_plain_double_layer_block_zero(self):
        # on a plane at normal incidence the double layer vanishes entirely,
        # the degenerate case of its source/target antisymmetry
        qp = make_qp(k=1.3)
        grid = sample_surface(flat_surface(), 8)
        qc = QuadratureConfig.for_grid(grid)
        mats = _assembly_layers(qp, grid, qc, WindowProfile(x_dependent=True),
                                8.0, ShiftConfig(p=0, d=1.0), GrazingSet(), ("DL",))
        assert np.max(np.abs(mats["DL"])) <= 1e-13

    def test_window_variants_converge_to_same_operator(self):
        # x-dependent and lattice-pinned windows must agree in the large-a
        # limit; at moderate a they already match to the truncation error
        qp = make_qp(k=2.5)
        surf = cos_cos_surface(0.3)
        grid = sample_surface(surf, 8)
        qc = QuadratureConfig.for_grid(grid)
        sys_x = assemble(qp, surf, grid, qc=qc, kernel="plain", a=25.0,
                         w=WindowProfile(x_dependent=True))
        sys_i = assemble(qp, surf, grid, qc=qc, kernel="plain", a=25.0,
                         w=WindowProfile(x_dependent=False))
        scale = np.max(np.abs(sys_x.matrix))
        assert np.max(np.abs(sys_x.matrix - sys_i.matrix)) <= 1e-2 * scale
