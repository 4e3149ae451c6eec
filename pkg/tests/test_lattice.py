"""Tests for the windowed lattice sum, its gradient and the spectral oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgreen.errors import SingularEvaluationError, WoodAnomalyError
from qpgreen.lattice import (
    QuasiPeriodicity,
    WindowProfile,
    fourier_green,
    free_green,
    gamma,
    lattice_indices,
    window_value,
    windowed_green,
    windowed_green_gradient,
    wood_modes,
)

TWO_PI = 2.0 * np.pi


def make_qp(k=1.0, alpha=0.0, beta=0.0, d1=1.0, d2=1.0):
    return QuasiPeriodicity(k=k, d1=d1, d2=d2, alpha=alpha, beta=beta)


class TestQuasiPeriodicity:
    def test_rejects_nonpositive_k(self):
        with pytest.raises(ValueError):
            make_qp(k=0.0)
        with pytest.raises(ValueError):
            make_qp(k=-2.0)

    def test_rejects_nonpositive_periods(self):
        with pytest.raises(ValueError):
            QuasiPeriodicity(k=1.0, d1=0.0, d2=1.0, alpha=0.0, beta=0.0)

    def test_rejects_nonfinite_bloch(self):
        with pytest.raises(ValueError):
            make_qp(alpha=np.nan)

    def test_dual_components(self):
        qp = make_qp(alpha=0.3, beta=-0.2, d1=2.0, d2=0.5)
        assert qp.alpha_j(3) == pytest.approx(0.3 + TWO_PI * 3 / 2.0)
        assert qp.beta_l(-2) == pytest.approx(-0.2 - TWO_PI * 2 / 0.5)


class TestGamma:
    def test_normal_incidence_specular(self):
        assert gamma(make_qp(), 0, 0) == pytest.approx(1.0 + 0.0j)

    def test_evanescent_branch(self):
        # sqrt(1 - 4 pi^2) on the stated branch is positive imaginary
        val = gamma(make_qp(), 1, 0)
        assert val.real == pytest.approx(0.0, abs=1e-14)
        assert val.imag == pytest.approx(math.sqrt(4 * np.pi**2 - 1), rel=1e-12)
        assert val.imag == pytest.approx(6.2031, abs=5e-5)

    def test_first_anomaly_is_exactly_grazing(self):
        val = gamma(make_qp(k=TWO_PI), 1, 0)
        assert abs(val) <= 1e-12 * TWO_PI

    def test_propagating_is_positive_real(self):
        val = gamma(make_qp(k=7.0), 1, 0)
        assert val.imag == 0.0 and val.real > 0.0

    @given(st.floats(0.1, 50.0), st.floats(-10.0, 10.0), st.floats(-10.0, 10.0),
           st.integers(-4, 4), st.integers(-4, 4))
    @settings(max_examples=60, deadline=None)
    def test_branch_invariant(self, k, alpha, beta, j, l):
        val = gamma(make_qp(k=k, alpha=alpha, beta=beta), j, l)
        assert val.real >= 0.0 and val.imag >= 0.0
        if abs(val) / k >= 1e-12:
            assert val.real == 0.0 or val.imag == 0.0


class TestWoodModes:
    def test_second_anomaly_diagonal_modes(self):
        modes = wood_modes(make_qp(k=2 * math.sqrt(2) * np.pi), j_max=3,
                           grazing_tol=1e-2)
        found = {(m.j, m.l) for m in modes}
        assert found == {(1, 1), (1, -1), (-1, 1), (-1, -1)}
        assert all(m.flag == "exact" for m in modes)

    def test_far_below_cutoff_empty(self):
        assert wood_modes(make_qp(k=1.0), j_max=3, grazing_tol=1e-2) == []

    def test_oblique_near_anomaly_detected(self):
        # |(alpha_{-1}, beta_1)| / (2 pi) = sqrt(0.6^2 + 0.7^2) = 0.921954...
        qp = make_qp(k=TWO_PI * 0.921954, alpha=TWO_PI * 0.4, beta=-TWO_PI * 0.3)
        modes = wood_modes(qp, j_max=2, grazing_tol=1e-3)
        assert (-1, 1) in {(m.j, m.l) for m in modes}

    def test_mode_fields_consistent(self):
        qp = make_qp(k=7.0, alpha=0.1)
        (mode,) = [m for m in wood_modes(qp, j_max=2, grazing_tol=0.2)
                   if (m.j, m.l) == (-1, 0)] or [None]
        if mode is not None:
            assert mode.alpha_j == pytest.approx(qp.alpha_j(-1))
            assert mode.gamma_jl == pytest.approx(gamma(qp, -1, 0))


class TestWindowValue:
    def test_plateau(self):
        assert window_value(WindowProfile(), 0.5, 0.0) == 1.0
        assert window_value(WindowProfile(), -0.3, 0.9) == 1.0

    def test_bump_midpoint(self):
        # the bump profile at the midpoint of [1, 2] is exp(-4 e^{-2})
        val = window_value(WindowProfile(), 1.5, 0.0)
        assert val == pytest.approx(math.exp(-4.0 * math.exp(-2.0)), rel=1e-14)
        assert val == pytest.approx(0.582, abs=5e-4)

    def test_outside_support(self):
        for shape in ("figure-bump", "polynomial-blend"):
            assert window_value(WindowProfile(shape=shape), 2.5, 0.0) == 0.0
            assert window_value(WindowProfile(shape=shape), 0.0, -2.01) == 0.0

    def test_monotone_and_bounded_on_transition(self):
        for shape in ("figure-bump", "polynomial-blend"):
            for separable in (True, False):
                w = WindowProfile(shape=shape, separable=separable)
                u = np.linspace(1.0, 2.0, 200)
                vals = np.array([window_value(w, float(s), 0.0) for s in u])
                assert np.all(vals <= 1.0) and np.all(vals >= 0.0)
                assert np.all(np.diff(vals) <= 1e-12)
                # the bump saturates to 1.0 (and underflows to 0.0) within
                # machine precision near the edges; check strict interior
                # behavior away from them
                mid = vals[(u > 1.2) & (u < 1.8)]
                assert np.all((mid > 0.0) & (mid < 1.0))

    def test_separable_vs_radial_agree_on_axes(self):
        ws = WindowProfile(separable=True)
        wr = WindowProfile(separable=False)
        for s in (0.2, 1.3, 1.9):
            assert window_value(ws, s, 0.0) == pytest.approx(
                window_value(wr, s, 0.0), rel=1e-13)

    def test_custom_radii(self):
        w = WindowProfile(inner=2.0, outer=5.0)
        assert window_value(w, 1.9, 0.0) == 1.0
        assert window_value(w, 5.1, 0.0) == 0.0
        assert 0.0 < window_value(w, 3.5, 0.0) < 1.0

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            WindowProfile(inner=2.0, outer=2.0)
        with pytest.raises(ValueError):
            WindowProfile(inner=-1.0, outer=2.0)


class TestFreeGreen:
    def test_static_monopole(self):
        assert free_green(0.0, 1.0) == pytest.approx(1.0 / (4 * np.pi))

    def test_half_wavelength_sign_flip(self):
        assert free_green(np.pi, 1.0) == pytest.approx(-1.0 / (4 * np.pi))

    def test_generic_value(self):
        val = free_green(2.0, 0.5)
        assert val == pytest.approx(np.exp(1j) / (2 * np.pi), rel=1e-14)
        assert val == pytest.approx(0.08601 + 0.13394j, abs=5e-5)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            free_green(1.0, 0.0)
        with pytest.raises(ValueError):
            free_green(1.0, -0.2)


class TestLatticeIndices:
    def test_shell_ordering(self):
        mm, nn = lattice_indices(WindowProfile(), 3.0, 1.0, 1.0)
        shells = np.maximum(np.abs(mm), np.abs(nn))
        assert np.all(np.diff(shells) >= 0)

    def test_covers_window_support(self):
        a = 5.0
        mm, nn = lattice_indices(WindowProfile(), a, 1.0, 1.0)
        # every index with nonzero window value must be enumerated
        assert mm.min() <= -2 * a and mm.max() >= 2 * a

    def test_deterministic(self):
        one = lattice_indices(WindowProfile(), 7.3, 1.0, 2.0)
        two = lattice_indices(WindowProfile(), 7.3, 1.0, 2.0)
        assert np.array_equal(one[0], two[0]) and np.array_equal(one[1], two[1])


class TestWindowedGreen:
    def test_oracle_equivalence_normal(self):
        qp = make_qp(k=2.5)
        w = WindowProfile(x_dependent=True)
        pt = (0.1, 0.2, 0.5)
        ref = fourier_green(qp, pt)
        got = windowed_green(qp, w, 60.0, pt)
        assert abs(got - ref) / abs(ref) <= 1e-4

    def test_oracle_equivalence_oblique(self):
        qp = make_qp(k=2.5, alpha=0.4, beta=-0.7)
        got = windowed_green(qp, WindowProfile(x_dependent=True), 80.0,
                             (0.3, 0.1, 0.6))
        ref = fourier_green(qp, (0.3, 0.1, 0.6))
        assert abs(got - ref) / abs(ref) <= 1e-4

    def test_quasi_periodicity_ratio(self):
        qp = make_qp(k=2.5, alpha=0.9)
        w = WindowProfile(x_dependent=True)
        pt = np.array([0.13, 0.27, 0.4])
        g0 = windowed_green(qp, w, 120.0, pt)
        g1 = windowed_green(qp, w, 120.0, pt + np.array([1.0, 0.0, 0.0]))
        assert abs(g1 / g0 - np.exp(1j * qp.alpha * qp.d1)) <= 1e-4

    def test_x_dependent_window_exactly_quasi_periodic(self):
        # with the x-dependent window the truncated sum itself satisfies the
        # Bloch relation exactly, by re-indexing of the retained images
        qp = make_qp(k=2.5, alpha=0.9, beta=0.2)
        w = WindowProfile(x_dependent=True)
        pt = np.array([0.13, 0.27, 0.4])
        g0 = windowed_green(qp, w, 9.0, pt)
        g1 = windowed_green(qp, w, 9.0, pt + np.array([1.0, 0.0, 0.0]))
        assert abs(g1 - np.exp(1j * qp.alpha * qp.d1) * g0) <= 1e-13 * abs(g0)

    def test_slow_decay_near_anomaly(self):
        w = WindowProfile(x_dependent=True)
        pts = np.array([[0.1, 0.2, 0.5]])
        sched = [1.2 ** i for i in range(12, 19)]

        def diffs(k):
            qp = make_qp(k=k)
            vals = [windowed_green(qp, w, a, pts)[0] for a in sched]
            return np.abs(np.diff(vals))

        fast = diffs(TWO_PI * 0.4)
        slow = diffs(TWO_PI * 0.99)
        assert fast[-1] / fast[0] < 0.1 * slow[-1] / slow[0]

    def test_collision_names_offender(self):
        qp = make_qp(k=2.5)
        with pytest.raises(SingularEvaluationError, match=r"\(1, 0\)"):
            windowed_green(qp, WindowProfile(), 10.0, (-1.0, 0.0, 0.0))

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            windowed_green(make_qp(), WindowProfile(), 0.0, (0.1, 0.1, 0.1))

    def test_vectorized_matches_scalar(self):
        qp = make_qp(k=2.5, alpha=0.3)
        w = WindowProfile()
        pts = np.array([[0.1, 0.2, 0.5], [0.4, 0.1, -0.3]])
        vec = windowed_green(qp, w, 15.0, pts)
        for i, p in enumerate(pts):
            assert vec[i] == pytest.approx(windowed_green(qp, w, 15.0, p), rel=1e-14)

    def test_compensated_agrees(self):
        qp = make_qp(k=2.5, alpha=0.3)
        w = WindowProfile()
        pt = (0.1, 0.2, 0.5)
        plain = windowed_green(qp, w, 40.0, pt)
        comp = windowed_green(qp, w, 40.0, pt, compensated=True)
        assert abs(plain - comp) <= 1e-12 * abs(plain)


class TestWindowedGreenGradient:
    def central_difference(self, qp, w, a, pt, h=1e-5):
        pt = np.asarray(pt, dtype=float)
        out = np.zeros(3, dtype=complex)
        for c in range(3):
            e = np.zeros(3)
            e[c] = h
            out[c] = (windowed_green(qp, w, a, pt + e)
                      - windowed_green(qp, w, a, pt - e)) / (2 * h)
        return out

    def test_matches_finite_differences(self):
        qp = make_qp(k=2.5, alpha=0.3, beta=-0.1)
        for w in (WindowProfile(), WindowProfile(x_dependent=True)):
            pt = np.array([0.21, 0.37, 0.53])
            grad = windowed_green_gradient(qp, w, 12.0, pt)
            ref = self.central_difference(qp, w, 12.0, pt)
            assert np.max(np.abs(grad - ref)) / np.max(np.abs(ref)) <= 1e-6

    def test_near_static_single_source_limit(self):
        # tiny k and tiny a retain only the central monopole, whose gradient
        # is -x e^{ikr}(1/r - ik) / (4 pi r^2); at k -> 0 this is -x/(4 pi r^3)
        qp = make_qp(k=1e-8)
        w = WindowProfile(inner=0.1, outer=0.2)
        pt = np.array([0.2, 0.1, 0.3])
        r = np.linalg.norm(pt)
        grad = windowed_green_gradient(qp, w, 1.0, pt)
        ref = -pt / (4 * np.pi * r**3)
        assert np.max(np.abs(grad - ref)) <= 1e-7 * np.max(np.abs(ref))

    def test_z_component_odd_in_z(self):
        qp = make_qp(k=2.5)
        w = WindowProfile()
        up = windowed_green_gradient(qp, w, 10.0, (0.0, 0.0, 0.4))
        dn = windowed_green_gradient(qp, w, 10.0, (0.0, 0.0, -0.4))
        assert up[2] == pytest.approx(-dn[2], rel=1e-12)
        assert up[0] == pytest.approx(dn[0], rel=1e-12, abs=1e-14)


class TestFourierGreen:
    def test_single_mode_dominates_far_above(self):
        val = fourier_green(make_qp(), (0.0, 0.0, 10.0), j_max=20)
        assert val == pytest.approx(0.5j * np.exp(10j), rel=1e-12)

    def test_truncation_stability(self):
        qp = make_qp(k=2.5, alpha=0.2)
        for pt in ((0.1, 0.3, 0.2), (0.4, 0.2, -0.35)):
            lo = fourier_green(qp, pt, j_max=20)
            hi = fourier_green(qp, pt, j_max=40)
            assert abs(lo - hi) <= 1e-10 * abs(hi)

    def test_refuses_exact_anomaly(self):
        with pytest.raises(WoodAnomalyError, match=r"\((-?1,0|0,-?1)\)"):
            fourier_green(make_qp(k=TWO_PI), (0.1, 0.1, 0.5))

    def test_refuses_zero_height(self):
        with pytest.raises(ValueError):
            fourier_green(make_qp(), (0.1, 0.1, 0.0))
