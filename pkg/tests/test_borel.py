"""Borel grid quadrature, Laplace convolution, the integral operator and Picard."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borel_ns.borel import (BorelField, BorelGrid, apply_N, compute_v1, g_oper, gregory_weights,
                            laplace_convolve, linear_part, log_linear_r2, picard_solve,
                            weighted_norm)
from borel_ns.errors import BorelNSError, NoConvergence
from borel_ns.norms import DecayParams, norm_mu_beta
from borel_ns.spectral import SpectralField, WaveGrid, convolve_values, preset_field

from conftest import random_divfree


class TestQuadrature:
    @pytest.mark.parametrize("q", range(8))
    def test_gregory_exact_for_low_degree(self, q):
        n, length = 40, 3.0
        h = length / (n - 1)
        x = np.linspace(0, length, n)
        assert math.isclose(gregory_weights(n, h) @ x**q, length ** (q + 1) / (q + 1), rel_tol=1e-12)

    def test_grid_weights_integrate_in_p(self):
        g = BorelGrid(5.0, 128)
        for f, exact in [(np.exp(-g.nodes), 1 - math.exp(-5)), (g.nodes**2, 125 / 3)]:
            assert math.isclose(g.weights @ f, exact, rel_tol=1e-10)

    def test_interpolation_reproduces_even_polynomials(self):
        g = BorelGrid(4.0, 64)
        targets = np.linspace(0, g.s_max, 97)
        mat = g.interpolation_matrix(targets)
        for q in (0, 2, 4, 6):
            assert np.allclose(mat @ g.s**q, targets**q, atol=1e-11 * g.s_max**q)

    def test_too_few_nodes(self):
        with pytest.raises(BorelNSError):
            BorelGrid(1.0, 8)
        with pytest.raises(BorelNSError):
            BorelGrid(-1.0, 64)


class TestLaplaceConvolution:
    @pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (2, 3), (3, 3)])
    def test_power_profiles(self, a, b):
        # int_0^p (p-s)^a s^b ds = a! b!/(a+b+1)! p^{a+b+1}
        grid = WaveGrid(8)
        pg = BorelGrid(3.0, 64)
        rng = np.random.default_rng(a + 10 * b)
        fa, fb = random_divfree(grid, rng), random_divfree(grid, rng)
        p = pg.nodes[:, None, None, None, None]
        ua = BorelField(grid, pg, p**a * fa.values[None])
        ub = BorelField(grid, pg, p**b * fb.values[None])
        out = laplace_convolve(ua, ub)
        coef = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 1)
        expected = np.stack([convolve_values(fa.values[i], fb.values[i], grid) for i in range(3)])
        expected = coef * p ** (a + b + 1) * expected[None]
        assert np.max(np.abs(out.values - expected)) < 1e-11 * np.max(np.abs(expected))

    def test_complex_path(self):
        grid = WaveGrid(8)
        pg = BorelGrid(2.0, 32)
        rng = np.random.default_rng(9)
        vals = rng.standard_normal((3, 8, 8, 8)) + 1j * rng.standard_normal((3, 8, 8, 8))
        vals = np.where(grid.mask, vals, 0)
        ua = BorelField(grid, pg, np.broadcast_to(vals, (32, 3, 8, 8, 8)))
        out = laplace_convolve(ua, ua)
        expected = pg.nodes[:, None, None, None, None] * np.stack([convolve_values(vals[i], vals[i], grid)
                                                  for i in range(3)])[None]
        assert np.allclose(out.values, expected, atol=1e-11)


class TestOperator:
    def test_zero_is_fixed_point_of_zero_data(self, grid8):
        pg = BorelGrid(2.0, 32)
        z = SpectralField.zeros(grid8)
        out = apply_N(BorelField.zeros(grid8, pg), z, z)
        assert np.all(out.values == 0)

    def test_single_mode_is_exact(self, grid8, decay):
        v0 = preset_field("single_mode", grid8, amplitude=1e-3)
        f = SpectralField.zeros(grid8)
        v1 = compute_v1(v0, f)
        assert np.allclose(v1.values, -grid8.k2 * v0.values)
        pg = BorelGrid(2.0, 64)
        u = BorelField(grid8, pg, linear_part(v1, pg))
        out = apply_N(u, v0, v1)
        assert np.max(np.abs(out.values - u.values)) < 1e-20

    def test_g_oper_is_projected(self, grid8):
        rng = np.random.default_rng(1)
        v0 = random_divfree(grid8, rng, 1e-3)
        pg = BorelGrid(2.0, 32)
        u = BorelField(grid8, pg, linear_part(random_divfree(grid8, rng), pg))
        for comp in g_oper(u, v0):
            div = np.abs(np.sum(grid8.k[None] * comp.values, axis=1))
            assert div.max() < 1e-12 * max(np.abs(comp.values).max(), 1e-300)

    def test_grid_mismatch(self, grid8):
        pg = BorelGrid(2.0, 32)
        z8 = SpectralField.zeros(grid8)
        z4 = SpectralField.zeros(WaveGrid(4))
        with pytest.raises(BorelNSError) as exc:
            apply_N(BorelField.zeros(grid8, pg), z4, z4)
        assert exc.value.code == "GRID_MISMATCH"
        with pytest.raises(BorelNSError):
            BorelField.zeros(grid8, pg) - BorelField.zeros(grid8, BorelGrid(3.0, 32))
        with pytest.raises(BorelNSError):
            BorelField(grid8, pg, np.zeros((31, 3, 8, 8, 8)))
        del z8

    def test_compute_v1_needs_div_free(self, grid8):
        bad = SpectralField(grid8, np.ones((3, 8, 8, 8), complex), divergence_free=False)
        with pytest.raises(BorelNSError) as exc:
            compute_v1(bad, SpectralField.zeros(grid8))
        assert exc.value.code == "NOT_DIV_FREE"


class TestNorms:
    def test_constant_profile(self, grid8, decay):
        pg = BorelGrid(4.0, 128)
        v = preset_field("taylor_green_like", grid8)
        u = BorelField(grid8, pg, np.broadcast_to(v.values, (128, 3, 8, 8, 8)))
        n = norm_mu_beta(v, decay)
        assert math.isclose(weighted_norm(u, "alpha_l1", 0.5, decay), n * (1 - math.exp(-2)) / 0.5,
                            rel_tol=1e-12)
        assert math.isclose(weighted_norm(u, "alpha_sup", 0.0, decay), 17 * n, rel_tol=1e-12)
        assert math.isclose(weighted_norm(u, "sup_L", 1.0, decay), n)

    def test_bad_kind(self, grid8, decay):
        u = BorelField.zeros(grid8, BorelGrid(1.0, 32))
        with pytest.raises(BorelNSError) as exc:
            weighted_norm(u, "l2", 1.0, decay)
        assert exc.value.code == "BAD_KIND"

    def test_log_linear_r2(self):
        assert log_linear_r2([1, 0.1, 0.01, 0.001]) == (pytest.approx(1.0), 4)
        assert log_linear_r2([1.0, 0.5]) == (1.0, 2)


class TestPicard:
    def test_heat_equation(self, grid8, decay):
        v0 = preset_field("random_band", grid8, seed=1)
        f = SpectralField.zeros(grid8)
        pg = BorelGrid(40.0, 256)
        u, diag = picard_solve(v0, f, decay, pg, nonlinear=False)
        assert diag.converged and diag.alpha == 0
        v1 = compute_v1(v0, f, nonlinear=False)
        assert np.allclose(u.values, linear_part(v1, pg))

    def test_linear_needs_grid(self, grid8, decay):
        z = SpectralField.zeros(grid8)
        with pytest.raises(BorelNSError) as exc:
            picard_solve(z, z, decay, nonlinear=False)
        assert exc.value.code == "CONFIG_INVALID"

    @pytest.mark.parametrize("name", ["taylor_green_like", "random_band", "single_mode"])
    def test_small_data_invariants(self, solved, name):
        s = solved[name]
        assert s.diag.converged
        assert s.diag.contraction_ratio < 1
        assert s.diag.max_divergence_defect <= 1e-12
        assert s.diag.max_hermitian_defect <= 1e-12
        assert np.max(np.abs(s.u.values[0] - s.v1.values)) <= 1e-10 * max(np.abs(s.v1.values).max(), 1e-300)
        assert s.diag.solution_norm <= s.diag.ball_radius

    def test_residual_small(self, solved):
        d = solved["taylor_green_like"].diag
        assert d.residual <= 1e-25 * d.solution_norm

    def test_no_convergence(self, grid8, decay, consts, presets, zero_force):
        with pytest.raises(NoConvergence) as exc:
            picard_solve(presets["taylor_green_like"], zero_force, decay, tol=1e-40, max_iter=1,
                         consts=consts)
        assert exc.value.code == "NO_CONVERGENCE"
        assert exc.value.context["diagnostics"].iterations == 1
