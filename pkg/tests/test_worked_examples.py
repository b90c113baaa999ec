"""Small hand-checkable instances for every module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from borel_ns.bessel import duhamel_invert, green_G, j1_over_z, kernel_sup_scan
from borel_ns.borel import (BorelField, BorelGrid, apply_N, compute_v1, g_oper, laplace_convolve,
                            linear_part, picard_solve, weighted_norm)
from borel_ns.lemmas import verify_inequality
from borel_ns.norms import (MARGIN, DecayParams, alpha_min, c0_of_mu, c2_of_mu, ensure2_lhs,
                            ensure3_lhs, gevrey_a0_b0, l_max, norm_mu_beta, p_poly, q_poly)
from borel_ns.oracle import StepperConfig, evolve, mu2_norm_trace, step_ifrk4
from borel_ns.spectral import (ScalarSpectralField, SpectralField, convolve_values,
                               fourier_convolve, hodge_project, nonlinear_term, preset_field)
from borel_ns.summation import (growth_rate, laplace_sum, physical_snapshot, physical_sup,
                                series_cutoff)
from borel_ns.taylor import _weight, first_coeffs, series_eval, taylor_coefficients

from conftest import random_divfree


def _point_field(grid, k, vec):
    """Hermitian field with ``vec`` at ``k`` and its conjugate at ``-k``."""
    n = grid.n
    values = np.zeros((3, n, n, n), dtype=complex)
    values[(slice(None),) + tuple(c % n for c in k)] = vec
    values[(slice(None),) + tuple(-c % n for c in k)] = np.conj(vec)
    return values


class TestSpectralExamples:
    def test_projection_single_wavevector(self, grid8):
        g = SpectralField(grid8, _point_field(grid8, (1, 0, 0), np.array([1, 1, 0])), False)
        out = hodge_project(g).values[:, 1, 0, 0]
        assert np.allclose(out, [0, 1, 0], atol=1e-15)

    def test_projection_never_grows(self, grid8):
        rng = np.random.default_rng(5)
        raw = rng.standard_normal((3, 8, 8, 8)) + 1j * rng.standard_normal((3, 8, 8, 8))
        out = hodge_project(SpectralField(grid8, raw, False)).values
        assert np.all(np.linalg.norm(out, axis=0) <= np.linalg.norm(raw, axis=0) * (1 + 1e-12))

    def test_unit_mass_is_identity(self, grid8):
        delta = np.zeros((8, 8, 8), dtype=complex)
        delta[0, 0, 0] = 1
        g = random_divfree(grid8, np.random.default_rng(1))
        out = fourier_convolve(ScalarSpectralField(grid8, delta), g)
        assert np.allclose(out.values, g.values, atol=1e-14)

    def test_single_mode_self_product(self, grid8):
        v = preset_field("single_mode", grid8, amplitude=1.0)
        uy = v.values[1]
        prod = convolve_values(uy, uy, grid8)
        expected = np.zeros((8, 8, 8), dtype=complex)
        expected[2, 0, 0] = expected[-2, 0, 0] = 0.25
        expected[0, 0, 0] = 0.5
        assert np.allclose(prod, expected, atol=1e-15)
        # the divergence contraction kills both the 2k0 and the zero mode
        assert np.max(np.abs(nonlinear_term(v).values)) < 1e-15


class TestNormExamples:
    def test_unit_mass_norm(self, grid8):
        values = np.zeros((3, 8, 8, 8), dtype=complex)
        values[0, 0, 0, 0] = 1
        assert norm_mu_beta(SpectralField(grid8, values, False), DecayParams(4, 1)) == 1.0

    def test_single_mode_norm(self, grid8):
        v = SpectralField(grid8, _point_field(grid8, (1, 0, 0), np.array([0, 1, 0])))
        val = norm_mu_beta(v, DecayParams(4.0, 0.5))
        assert val == pytest.approx(16 * math.exp(0.5), rel=1e-14)
        assert val == pytest.approx(26.38, abs=5e-3)

    @pytest.mark.parametrize("mu", [3.5, 4.0, 6.0])
    def test_c0_radial_integral(self, mu):
        radial, _ = integrate.quad(lambda r: r * r * (1 + r) ** (-mu), 0, np.inf, epsrel=1e-12)
        assert c0_of_mu(mu) == pytest.approx(2 ** (mu + 2) * 4 * math.pi * radial, rel=1e-9)

    def test_c0_grows_for_large_mu(self):
        vals = [c0_of_mu(mu) for mu in np.linspace(10, 40, 61)]
        assert np.all(np.diff(vals) > 0)

    def test_c2_example_and_closed_form(self):
        assert c2_of_mu(4.0, 0.6) == pytest.approx(1010.6, abs=0.05)
        for mu in (3.5, 4.0, 7.0):
            closed = 32 * 1.2 * math.pi**2 * 2**mu / ((mu - 1) * (mu - 2) * (mu - 3))
            assert c2_of_mu(mu, 0.6) == pytest.approx(closed, rel=1e-10)

    def test_polynomial_values(self):
        for n in range(12):
            assert q_poly(n, 0.0) == 2.0**n
        assert q_poly(2, 1.0) == 6.5

    @pytest.mark.parametrize("n", [0, 1, 3, 6])
    @pytest.mark.parametrize("z", [0.3, 2.0, 9.0])
    def test_incomplete_gamma(self, n, z):
        ref, _ = integrate.quad(lambda s: math.exp(-s) * s**n, 0, z, epsabs=0, epsrel=1e-13)
        assert math.factorial(n) - math.exp(-z) * p_poly(n, z) == pytest.approx(ref, rel=1e-11)

    def test_alpha_closed_form_without_initial_norm(self, consts):
        for n1 in (1e-3, 5e-3, 0.1):
            closed = (4 * consts.c2 * math.sqrt(math.pi) * n1 / (1 - MARGIN)) ** (2 / 3)
            assert closed > 1
            assert alpha_min(0.0, n1, consts) == pytest.approx(closed, rel=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 1e-2), st.floats(1e-8, 1e-2))
    def test_inverse_rate_is_admissible_window(self, consts, n0, n1):
        a = alpha_min(n0, n1, consts)
        assert ensure3_lhs(1 / a, n0, n1, consts.c2) <= (1 - MARGIN) * (1 + 1e-12)
        assert ensure2_lhs(a, n0, n1, consts.c2) <= (1 - MARGIN) * (1 + 1e-12)

    def test_window_unit_norms(self, consts):
        w = l_max(1.0, 1.0, consts)
        assert ensure3_lhs(w, 1.0, 1.0, consts.c2) <= 1 - MARGIN
        assert ensure3_lhs(w * 1.01, 1.0, 1.0, consts.c2) > 1 - MARGIN

    def test_gevrey_b0_weakly_decreases_with_beta(self, consts):
        b0s = [gevrey_a0_b0(0.1, 0.1, DecayParams(4.0, beta), consts)[1]
               for beta in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(b <= a * (1 + 1e-8) for a, b in zip(b0s, b0s[1:]))

    def test_convolution_inequality_hundred_pairs(self):
        assert verify_inequality("lem0.1", trials=100, seed=7).passed


class TestKernelExamples:
    def test_j1_over_z_values(self):
        assert j1_over_z(0.0) == 0.5
        zero = special.jn_zeros(1, 1)[0]
        assert zero == pytest.approx(3.8317, abs=1e-4)
        assert abs(j1_over_z(zero)) < 1e-15
        z = np.random.default_rng(0).uniform(0, 200, 10_000)
        assert np.all(np.abs(j1_over_z(z)) <= 0.5)

    def test_green_small_argument(self):
        assert float(green_G(1.0, 1e-6)) == pytest.approx(0.28013, abs=1e-4)

    def test_sup_scan_stability(self):
        vals = [kernel_sup_scan(z, 20_000) for z in (20.0, 50.0, 200.0)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert 0.55 <= vals[-1] <= 0.65
        doubled = kernel_sup_scan(200.0, 40_000)
        assert abs(doubled - vals[-1]) < 0.01 * vals[-1]

    def test_duhamel_zero_rhs(self):
        pg = BorelGrid(4.0, 64)
        assert np.all(duhamel_invert(np.zeros(64), 1.7, pg) == 0)


class TestBorelExamples:
    def test_v1_without_initial_data(self, grid8):
        f = random_divfree(grid8, np.random.default_rng(2))
        v1 = compute_v1(SpectralField.zeros(grid8), f)
        assert np.array_equal(v1.values, f.values)

    def test_v1_single_mode(self, grid8, zero_force):
        v0 = preset_field("single_mode", grid8, amplitude=0.3)
        v1 = compute_v1(v0, zero_force)
        assert np.allclose(v1.values, -grid8.k2 * v0.values, atol=1e-16)

    def test_linear_monomials_convolution(self, grid8):
        pg = BorelGrid(4.0, 128)
        p = pg.nodes[:, None, None, None, None]
        base = np.zeros((3, 8, 8, 8), dtype=complex)
        base[:, 0, 0, 0] = 1
        a = BorelField(grid8, pg, p * base)
        out = laplace_convolve(a, a).values[:, 0, 0, 0, 0].real
        assert np.allclose(out, pg.nodes**3 / 6, rtol=1e-10, atol=1e-14)

    def test_g_oper_constant_profile(self, grid8):
        pg = BorelGrid(2.0, 32)
        u0 = random_divfree(grid8, np.random.default_rng(3), 0.1)
        u = BorelField(grid8, pg, np.broadcast_to(u0.values, (32, 3, 8, 8, 8)))
        g = g_oper(u, SpectralField.zeros(grid8))
        for j in range(3):
            stress = convolve_values(u0.values[j], u0.values, grid8)
            expected = -hodge_project(SpectralField(grid8, stress, False)).values
            assert np.allclose(g[j].values, pg.nodes[:, None, None, None, None] * expected,
                               atol=1e-13)

    def test_operator_at_zero(self, grid8):
        pg = BorelGrid(2.0, 32)
        v0 = random_divfree(grid8, np.random.default_rng(4), 0.1)
        v1 = compute_v1(v0, SpectralField.zeros(grid8))
        out = apply_N(BorelField.zeros(grid8, pg), v0, v1)
        assert np.allclose(out.values, linear_part(v1, pg), atol=1e-15)

    def test_operator_origin_slice(self, grid8):
        pg = BorelGrid(2.0, 32)
        rng = np.random.default_rng(5)
        v0 = random_divfree(grid8, rng, 0.1)
        v1 = compute_v1(v0, SpectralField.zeros(grid8))
        vals = np.stack([random_divfree(grid8, rng, 0.1).values for _ in range(32)])
        out = apply_N(BorelField(grid8, pg, vals), v0, v1)
        assert np.allclose(out.values[0], v1.values, atol=1e-15)

    def test_operator_norm_estimate(self, grid8, consts, decay):
        # U(k, p) = a(k) e^{-p}: both integrals of the estimate have closed forms
        pg = BorelGrid(4.0, 64)
        rng = np.random.default_rng(6)
        a = random_divfree(grid8, rng, 1e-3)
        v0 = random_divfree(grid8, rng, 1e-3)
        v1 = compute_v1(v0, SpectralField.zeros(grid8))
        p = pg.nodes
        u = BorelField(grid8, pg, np.exp(-p)[:, None, None, None, None] * a.values)
        lhs = apply_N(u, v0, v1).norms(decay)
        na, n0, n1 = (norm_mu_beta(x, decay) for x in (a, v0, v1))
        quad = na**2 * (1 - (1 + p) * np.exp(-p)) + n0 * na * (1 - np.exp(-p))
        rhs = consts.c2 / np.sqrt(p[1:]) * quad[1:] + n1
        assert np.all(lhs[1:] <= rhs)

    def test_zero_data_one_iteration(self, grid8, decay, consts, zero_force):
        u, diag = picard_solve(zero_force, zero_force, decay, BorelGrid(4.0, 32), consts=consts)
        assert not np.any(u.values)
        assert diag.iterations <= 1

    @pytest.mark.parametrize("kind", ["alpha_sup", "alpha_l1", "sup_L"])
    def test_zero_field_norms(self, grid8, decay, kind):
        assert weighted_norm(BorelField.zeros(grid8, BorelGrid(2.0, 32)), kind, 1.0, decay) == 0

    def test_weighted_l1_product_bound(self, grid8, decay):
        # the lattice constant bounds the Fourier sum; the p-integrals factor
        from borel_ns.norms import c0_lattice

        pg = BorelGrid(6.0, 128)
        rng = np.random.default_rng(8)
        p = pg.nodes[:, None, None, None, None]
        fa = BorelField(grid8, pg, np.exp(-p) * random_divfree(grid8, rng).values)
        fb = BorelField(grid8, pg, np.cos(p) * random_divfree(grid8, rng).values)
        c0l = c0_lattice(grid8, decay.mu)
        for alpha in (0.5, 2.0):
            lhs = weighted_norm(laplace_convolve(fa, fb), "alpha_l1", alpha, decay)
            rhs = (c0l * weighted_norm(fa, "alpha_l1", alpha, decay)
                   * weighted_norm(fb, "alpha_l1", alpha, decay))
            assert lhs <= rhs


class TestTaylorExamples:
    def test_first_coefficient_without_initial_data(self, grid8):
        f = random_divfree(grid8, np.random.default_rng(9))
        v0 = SpectralField.zeros(grid8)
        w1, _ = first_coeffs(v0, compute_v1(v0, f))
        assert np.allclose(w1.values, -grid8.k2 * f.values / 2, atol=1e-15)

    @pytest.mark.parametrize("name", ["taylor_green_like", "random_band"])
    def test_first_coefficient_nodal_bound(self, solved, decay, consts, name):
        s = solved[name]
        w1 = first_coeffs(s.v0, s.v1)[0].values
        kmag = s.v0.grid.kmag
        n0, n1 = norm_mu_beta(s.v0, decay), norm_mu_beta(s.v1, decay)
        bound = (np.exp(-decay.beta * kmag) / (2 * (1 + kmag) ** decay.mu)
                 * (kmag**2 * n1 + 4 * consts.c0 * kmag * n0 * n1))
        assert np.all(np.linalg.norm(w1, axis=0) <= bound * (1 + 1e-12) + 1e-300)

    def test_single_mode_follows_heat_coefficients(self, grid8, zero_force):
        v0 = preset_field("single_mode", grid8, amplitude=0.5)
        v1 = compute_v1(v0, zero_force)
        tc = taylor_coefficients(v0, v1, l_max=6)
        for l in range(1, 7):
            expected = (-grid8.k2) ** l * v1.values / (math.factorial(l) * math.factorial(l + 1))
            assert np.allclose(tc.w(l).values, expected, rtol=1e-13, atol=1e-300)
            support = np.linalg.norm(tc.w(l).values, axis=0) > 0
            assert np.all(grid8.kmag[support] == 1.0)

    def test_convolution_weights(self):
        assert _weight(1, 1, 3) == pytest.approx(1 / 6, rel=1e-14)
        for l1, l2 in [(1, 4), (3, 3), (2, 7)]:
            beta_fn = special.beta(l1 + 1, l2 + 1)
            assert _weight(l1, l2, l1 + l2 + 1) == pytest.approx(beta_fn, rel=1e-12)

    @pytest.mark.parametrize("name", ["taylor_green_like", "random_band"])
    def test_physical_coefficient_bound(self, solved, name):
        s = solved[name]
        tc = taylor_coefficients(s.v0, s.v1, l_max=10)
        for l in range(1, 11):
            bound = 8 * math.pi * s.cert.a0 * (4 * s.cert.b0) ** l / (2 * l + 1) ** 2
            assert physical_sup(tc.w(l), 16) <= bound

    def test_tail_bound_geometric(self, solved):
        s = solved["taylor_green_like"]
        p = 0.5 / (4 * s.cert.b0)
        tails = [series_eval(taylor_coefficients(s.v0, s.v1, l_max=lm), p, s.cert.b0,
                             s.cert.a0).tail_bound for lm in (4, 5, 6, 7)]
        ratios = np.array(tails[1:]) / np.array(tails[:-1])
        assert np.all(ratios < 4 * s.cert.b0 * p)


class TestSummationExamples:
    def test_cutoff_example(self):
        assert series_cutoff(0.04, 10.0) == 2

    def test_small_time_returns_initial_data(self, solved, decay):
        s = solved["taylor_green_like"]
        out = laplace_sum(s.u, s.v0, 1e-3, alpha=s.diag.alpha, decay=decay)
        assert np.max(np.abs(out.field.values - s.v0.values)) < 2e-3 * np.max(np.abs(s.v1.values))

    def test_zero_data(self, grid8, decay):
        zero = BorelField.zeros(grid8, BorelGrid(4.0, 32))
        out = laplace_sum(zero, SpectralField.zeros(grid8), 0.2, alpha=1.0, decay=decay)
        assert not np.any(out.field.values)
        assert out.tail_error == 0

    def test_linear_mode_does_not_grow(self, grid8, decay, zero_force):
        v0 = preset_field("random_band", grid8, seed=1)
        u, _ = picard_solve(v0, zero_force, decay, BorelGrid(40.0, 256), nonlinear=False)
        assert growth_rate(u, 0.5, decay).alpha_hat <= 0

    def test_fitted_rate_below_certified(self, solved, decay):
        s = solved["taylor_green_like"]
        assert growth_rate(s.u, 0.3, decay).alpha_hat < s.diag.alpha

    def test_single_mode_physical_profile(self, solved, decay):
        s = solved["single_mode"]
        t = 0.25 / s.diag.alpha
        v = laplace_sum(s.u, s.v0, t, alpha=s.diag.alpha, decay=decay).field
        x = s.v0.grid.positions
        phys = physical_snapshot(v)
        expected = 1e-6 * math.exp(-t) * np.cos(x[0])
        assert np.allclose(phys[1], expected, atol=1e-6 * 1e-9)
        assert np.max(np.abs(phys[[0, 2]])) < 1e-20

    def test_parseval(self, grid8):
        v = random_divfree(grid8, np.random.default_rng(11))
        phys = physical_snapshot(v)
        assert np.mean(np.sum(phys**2, axis=0)) == pytest.approx(
            float(np.sum(np.abs(v.values) ** 2)), rel=1e-12)

    def test_circle_mean_reproduces_centre(self, solved, decay):
        s = solved["taylor_green_like"]
        alpha = s.diag.alpha
        t0, r = 0.25 / alpha, 0.02 / alpha
        centre = laplace_sum(s.u, s.v0, t0, alpha=alpha, decay=decay).field.values
        ring = [laplace_sum(s.u, s.v0, t0 + r * np.exp(1j * th), alpha=alpha,
                            decay=decay).field.values
                for th in np.linspace(0, 2 * np.pi, 16, endpoint=False)]
        mean = np.mean(ring, axis=0)
        assert np.max(np.abs(mean - centre)) <= 1e-6 * np.max(np.abs(centre))


class TestOracleExamples:
    def test_single_heat_step(self, grid8, zero_force):
        v = random_divfree(grid8, np.random.default_rng(12))
        out = step_ifrk4(v, zero_force, 0.1, nonlinear=False)
        assert np.allclose(out.values, np.exp(-0.1 * grid8.k2) * v.values, rtol=1e-14, atol=0)

    def test_zero_stays_zero(self, grid8, zero_force):
        traj = evolve(zero_force, zero_force, StepperConfig(dt=0.05, t_end=0.5))
        assert all(not np.any(v.values) for _, v in traj)

    def test_heat_trace_non_increasing(self, grid8, decay, zero_force):
        v0 = preset_field("random_band", grid8, seed=13)
        traj = evolve(v0, zero_force, StepperConfig(dt=0.05, t_end=1.0, nonlinear=False))
        trace = mu2_norm_trace(traj, decay)[:, 1]
        assert np.all(np.diff(trace) <= 1e-15 * trace[0])

    def test_nonlinear_trace_bounded(self, solved, decay, zero_force):
        s = solved["taylor_green_like"]
        t_end = 1 / s.diag.alpha
        traj = evolve(s.v0, zero_force, StepperConfig(dt=t_end / 50, t_end=t_end))
        trace = mu2_norm_trace(traj, decay)[:, 1]
        assert np.all(np.isfinite(trace))
        assert trace.max() <= trace[0] * (1 + 1e-9)
