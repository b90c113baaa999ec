"""Order-one Bessel functions, the Green kernel and the Duhamel inversion.

The linear operator in the Borel variable is ``D y = p y'' + 2 y' + |k|^2 y``.
With ``z = 2|k|sqrt(p)`` its solution with ``y(0) = 0`` is

    y(p) = pi / (2|k|sqrt(p)) * int_0^p G(z, z') rhs(p') dp',
    G(z, z') = z' (-J1(z) Y1(z') + Y1(z) J1(z')).

Bessel values come from power series (evaluated in extended precision) up
to ``z = 12`` and from Hankel asymptotics beyond.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import BorelNSError

SERIES_LIMIT = 12.0
SMALL_Z = 1e-3
EDGE_Z = 1e-150
_N_SERIES = 60
_N_ASYMP = 24

_LD = np.longdouble


def _series_coeffs():
    """Per-term factors of the J1 and Y1 power series (k = 0.._N_SERIES-1)."""
    k = np.arange(_N_SERIES)
    # 1 / (k! (k+1)!) by recursion
    inv = np.empty(_N_SERIES, dtype=_LD)
    inv[0] = 1
    for i in range(1, _N_SERIES):
        inv[i] = inv[i - 1] / (_LD(i) * _LD(i + 1))
    sign = np.where(k % 2 == 0, 1, -1).astype(_LD)
    # psi(k+1) + psi(k+2) with psi(n) = -gamma + H_{n-1}
    euler = _LD("0.577215664901532860606512090082402431")
    harm = np.concatenate([[_LD(0)], np.cumsum([_LD(1) / _LD(i) for i in range(1, _N_SERIES + 1)])])
    psi_sum = (-euler + harm[k]) + (-euler + harm[k + 1])
    return sign * inv, sign * inv * psi_sum


_J_COEF, _Y_COEF = _series_coeffs()


def _series_j1_y1(z: np.ndarray):
    """J1 and z*Y1 from the ascending series, ``z`` in ``(0, SERIES_LIMIT]``."""
    x = (z.astype(_LD) / 2)
    x2 = x * x
    powers = np.cumprod(np.broadcast_to(x2[:, None], (x.size, _N_SERIES)), axis=1) / x2[:, None]
    j1 = x * (powers @ _J_COEF)
    ysum = x * (powers @ _Y_COEF)
    two_over_pi = _LD(2) / _LD(np.pi)
    zl = z.astype(_LD)
    zy1 = two_over_pi * zl * j1 * np.log(x) - two_over_pi - zl * ysum / _LD(np.pi)
    return j1.astype(float), zy1.astype(float)


def _asymptotic_j1_y1(z: np.ndarray):
    """Hankel asymptotic J1 and Y1 for large ``z``."""
    mu = 4.0
    a = [1.0]
    for k in range(1, _N_ASYMP):
        a.append(a[-1] * (mu - (2 * k - 1) ** 2) / (k * 8.0))
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    inv = 1.0 / z
    for k in range(_N_ASYMP):
        term = a[k] * inv**k
        if k % 2 == 0:
            p += (-1) ** (k // 2) * term
        else:
            q += (-1) ** (k // 2) * term
    chi = z - 0.75 * np.pi
    amp = np.sqrt(2.0 / (np.pi * z))
    j1 = amp * (p * np.cos(chi) - q * np.sin(chi))
    y1 = amp * (p * np.sin(chi) + q * np.cos(chi))
    return j1, y1


def _eval(z):
    """Return ``(J1, z*Y1)`` arrays for ``z >= 0`` (``z*Y1 -> -2/pi`` at 0)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise BorelNSError("DOMAIN", "Bessel arguments must be finite and non-negative")
    flat = z.ravel()
    j1 = np.zeros_like(flat)
    zy1 = np.full_like(flat, -2 / np.pi)
    small = (flat > 0) & (flat <= SERIES_LIMIT)
    large = flat > SERIES_LIMIT
    if np.any(small):
        j1[small], zy1[small] = _series_j1_y1(flat[small])
    if np.any(large):
        jl, yl = _asymptotic_j1_y1(flat[large])
        j1[large] = jl
        zy1[large] = flat[large] * yl
    return j1.reshape(z.shape), zy1.reshape(z.shape)


def j1(z):
    """Bessel function ``J1``."""
    return _eval(z)[0]


def z_y1(z):
    """``z Y1(z)``, continuous at 0 with value ``-2/pi``."""
    return _eval(z)[1]


def y1(z):
    """Bessel function ``Y1`` for ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise BorelNSError("DOMAIN", "Y1 needs positive arguments")
    return _eval(z)[1] / z


def j1_over_z(z):
    """``J1(z)/z`` with the Taylor expansion below ``1e-3`` (value 1/2 at 0)."""
    z = np.asarray(z, dtype=float)
    j, _ = _eval(z)
    safe = np.where(z < SMALL_Z, 1.0, z)
    z2 = z * z
    taylor = 0.5 * (1 - z2 / 8 + z2 * z2 / 192)
    return np.where(z < SMALL_Z, taylor, j / safe)


def green_G(z, z_prime):
    """Green kernel ``G(z, z') = z'(-J1(z) Y1(z') + Y1(z) J1(z'))`` for ``0 <= z' <= z``.

    The ``z' = 0`` edge uses the analytic limit ``(2/pi) J1(z)``, which is also
    used below ``z' = 1e-150`` where the correction ``O(z'^2)`` is negligible.
    """
    z, zp = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(z_prime, dtype=float))
    if np.any(zp < 0) or np.any(zp > z):
        raise BorelNSError("DOMAIN", "green_G needs 0 <= z' <= z")
    jz, zyz = _eval(z)
    jp, zyp = _eval(zp)
    pos = zp > EDGE_Z
    safe_z = np.where(pos, z, 1.0)
    safe_p = np.where(pos, zp, 1.0)
    # written as z'(...) so that z' = z cancels exactly
    inner = zp * (-jz * (zyp / safe_p) + (zyz / safe_z) * jp)
    return np.where(pos, inner, (2 / np.pi) * jz)


def kernel_sup_scan(z_max: float, n_samples: int) -> float:
    """Maximum of ``|G|`` over ``0 <= z' <= z <= z_max``.

    A stratified grid (``z`` rows, ``z'`` spread over ``[0, z]`` plus a dense
    band next to the diagonal and the ``z' = 0`` edge) locates candidates,
    which are then refined by a bounded local search.
    """
    if z_max < 10 or n_samples < 1000:
        raise BorelNSError("DOMAIN", "kernel_sup_scan needs z_max >= 10 and n_samples >= 1000")
    n_rows = max(int(math.sqrt(n_samples)), 2)
    n_cols = max(n_samples // n_rows, 4)
    n_band = n_cols // 2
    n_spread = n_cols - n_band
    zs = np.linspace(0.0, z_max, n_rows)
    frac = np.linspace(0.0, 1.0, n_spread)
    spread = zs[:, None] * frac[None, :]
    band = zs[:, None] - np.minimum(zs[:, None], 2 * np.pi) * np.linspace(0, 1, n_band)[None, :]
    zp = np.concatenate([spread, band], axis=1)
    zz = np.broadcast_to(zs[:, None], zp.shape)
    vals = np.abs(green_G(zz, zp))
    best = float(vals.max())
    order = np.argsort(vals.ravel())[::-1][:8]
    for idx in order:
        z0, zp0 = float(zz.ravel()[idx]), float(zp.ravel()[idx])
        best = max(best, _refine(z0, zp0, z_max))
    return best


def _refine(z0: float, zp0: float, z_max: float) -> float:
    """Local maximisation of ``|G|`` started at ``(z0, zp0)``."""

    def neg(x):
        z = min(max(x[0], 0.0), z_max)
        zp = min(max(x[1], 0.0), z)
        return -float(np.abs(green_G(z, zp)))

    res = optimize.minimize(neg, [z0, zp0], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
    return -float(res.fun)


@lru_cache(maxsize=256)
def _kernel_matrix(k_mag: float, s_max: float, n_nodes: int) -> np.ndarray:
    """Trapezoid-in-``s`` Volterra matrix for one wavenumber magnitude."""
    s = np.linspace(0.0, s_max, n_nodes)
    h = s[1] - s[0]
    if k_mag == 0:
        a = np.ones_like(s)
        ratio = np.zeros((n_nodes, n_nodes))
        ratio[1:, :] = (s[None, :] / s[1:, None]) ** 2
        kern = a[:, None] - ratio
    else:
        z = 2 * k_mag * s
        jz = j1_over_z(z)
        zy = z_y1(z)
        ratio = np.zeros((n_nodes, n_nodes))
        ratio[1:, :] = (s[None, :] / s[1:, None]) ** 2
        kern = np.pi * (-jz[:, None] * zy[None, :] + zy[:, None] * jz[None, :] * ratio)
    w = np.tril(np.full((n_nodes, n_nodes), h))
    w[:, 0] *= 0.5
    w[np.arange(n_nodes), np.arange(n_nodes)] *= 0.5
    w[0, 0] = 0.0
    mat = kern * w * (2 * s[None, :])
    mat[0, :] = 0.0
    return mat


def duhamel_matrix(k_mag: float, p_grid) -> np.ndarray:
    """Dense lower-triangular matrix mapping rhs samples to the Duhamel solution."""
    return _kernel_matrix(float(k_mag), float(p_grid.s_max), int(p_grid.n_nodes))


def duhamel_invert(rhs: np.ndarray, k_mag: float, p_grid) -> np.ndarray:
    """Solve ``D y = rhs`` with ``y(0) = 0`` on the Borel grid.

    Parameters
    ----------
    rhs : ndarray
        Samples on the p-grid along axis 0 (trailing axes are carried along).
    k_mag : float
        Wavenumber magnitude ``|k| >= 0``.
    p_grid : BorelGrid

    Returns
    -------
    ndarray
        Solution samples, same shape as ``rhs``.
    """
    rhs = np.asarray(rhs)
    if rhs.shape[0] != p_grid.n_nodes:
        raise BorelNSError("GRID_MISMATCH", "rhs is not sampled on the given p-grid")
    if k_mag < 0:
        raise BorelNSError("DOMAIN", "k_mag must be non-negative")
    mat = duhamel_matrix(k_mag, p_grid)
    flat = rhs.reshape(rhs.shape[0], -1)
    return (mat @ flat).reshape(rhs.shape)
