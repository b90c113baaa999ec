"""Bessel evaluation, the Green kernel and Duhamel inversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from borel_ns.bessel import (duhamel_invert, duhamel_matrix, green_G, j1, j1_over_z, kernel_sup_scan,
                             y1, z_y1)
from borel_ns.borel import BorelGrid
from borel_ns.errors import BorelNSError


class TestBessel:
    def test_against_scipy_dense(self):
        z = np.concatenate([np.linspace(1e-4, 30, 20001), np.geomspace(30, 5000, 2000)])
        assert np.max(np.abs(j1(z) - special.j1(z))) < 1e-11
        assert np.max(np.abs(z_y1(z) - z * special.y1(z))) < 1e-11 * np.maximum(1, z).max()
        assert np.max(np.abs((y1(z) - special.y1(z)) / np.maximum(1, np.abs(special.y1(z))))) < 1e-11

    @given(z=st.floats(1e-8, 1e4))
    def test_against_scipy_random(self, z):
        assert abs(j1(z) - special.j1(z)) < 1e-11
        assert abs(j1_over_z(z) - special.j1(z) / z) < 1e-11

    def test_small_argument_limits(self):
        assert j1_over_z(0.0) == 0.5
        assert np.isclose(z_y1(1e-9), -2 / np.pi, atol=1e-12)

    def test_y1_domain(self):
        with pytest.raises(BorelNSError) as exc:
            y1(0.0)
        assert exc.value.code == "DOMAIN"


class TestGreenKernel:
    @settings(max_examples=200)
    @given(z=st.floats(1e-3, 300), frac=st.floats(0, 1))
    def test_against_scipy(self, z, frac):
        zp = z * frac
        # the reference overflows near zero; use the analytic edge value there
        ref = zp * (-special.j1(z) * special.y1(zp) + special.y1(z) * special.j1(zp)) if zp > 1e-200 \
            else 2 / np.pi * special.j1(z)
        assert abs(green_G(z, zp) - ref) < 1e-10

    def test_diagonal_vanishes(self):
        z = np.linspace(0.0, 100, 1001)
        assert np.all(green_G(z[1:], z[1:]) == 0)

    def test_edge_limit(self):
        z = np.array([0.5, 3.0, 40.0])
        assert np.allclose(green_G(z, 1e-12), 2 / np.pi * special.j1(z), atol=1e-10)

    def test_domain(self):
        with pytest.raises(BorelNSError):
            green_G(1.0, 2.0)
        with pytest.raises(BorelNSError):
            green_G(1.0, -0.1)

    def test_sup_scan(self):
        sup = kernel_sup_scan(200.0, 100_000)
        # a dense brute-force grid never exceeds the scan
        z = np.linspace(0, 200, 1500)
        zz, ff = np.meshgrid(z, np.linspace(0, 1, 1500), indexing="ij")
        brute = np.abs(green_G(zz, zz * ff)).max()
        assert brute <= sup + 1e-12
        assert 0.55 <= sup <= 0.70

    def test_sup_scan_domain(self):
        with pytest.raises(BorelNSError) as exc:
            kernel_sup_scan(5.0, 10_000)
        assert exc.value.code == "DOMAIN"
        with pytest.raises(BorelNSError):
            kernel_sup_scan(100.0, 10)


def bessel_profile(k, p):
    z = 2 * k * np.sqrt(p)
    return 2 * j1_over_z(z)


class TestDuhamel:
    def test_zero_wavenumber(self):
        # y = int_0^p (1 - p'/p) dp' = p/2 for unit forcing; trapezoid in s is second order
        errs = []
        for n in (65, 129, 257):
            g = BorelGrid(4.0, n)
            y = duhamel_invert(np.ones(n), 0.0, g)
            errs.append(np.max(np.abs(y - g.nodes / 2)))
            assert errs[-1] <= g.h**2
        assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 1.9)

    @pytest.mark.parametrize("k", [0.5, 1.0, np.sqrt(3), 2 * np.sqrt(3)])
    def test_constant_forcing_identity(self, k):
        # D y = -k^2 with y(0) = 0 is solved by 2 J1(z)/z - 1
        errs = []
        for n in (65, 129, 257, 513):
            g = BorelGrid(4.0, n)
            y = duhamel_invert(np.full(n, -k * k), k, g)
            errs.append(np.max(np.abs(y - (bessel_profile(k, g.nodes) - 1))))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert errs[-1] < 1e-4
        assert np.all(rates > 1.8)

    def test_lower_triangular(self):
        m = duhamel_matrix(1.3, BorelGrid(2.0, 33))
        assert np.all(np.triu(m, 1) == 0)
        assert np.all(m[0] == 0)

    def test_errors(self):
        g = BorelGrid(2.0, 33)
        with pytest.raises(BorelNSError) as exc:
            duhamel_invert(np.ones(32), 1.0, g)
        assert exc.value.code == "GRID_MISMATCH"
        with pytest.raises(BorelNSError) as exc:
            duhamel_invert(np.ones(33), -1.0, g)
        assert exc.value.code == "DOMAIN"

    def test_trailing_axes(self):
        g = BorelGrid(2.0, 33)
        rhs = np.random.default_rng(0).standard_normal((33, 3, 2))
        y = duhamel_invert(rhs, 1.0, g)
        assert np.allclose(y[:, 1, 0], duhamel_invert(rhs[:, 1, 0], 1.0, g))
