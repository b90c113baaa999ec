"""Truncated Fourier representation of vector fields on a periodic lattice.

Conventions
-----------
Arrays follow numpy FFT ordering along the last three axes.  Vector fields
carry their component index first, so a field on an ``N``-lattice has shape
``(3, N, N, N)``.  Integer modes ``n`` lie in ``[-N/2, N/2)`` and the physical
wavevector is ``k = box_scale * n``.

Fourier coefficients are normalised so that the convolution is the plain sum
``(f * g)(k) = sum_{k'} f(k') g(k - k')``: forward transform is
``fftn(f) / N**3`` and the inverse is ``ifftn(f_hat) * N**3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from .errors import BorelNSError, require

AXES = (-3, -2, -1)


@dataclass(frozen=True)
class WaveGrid:
    """Cubic lattice of integer modes with a dealiasing band.

    Parameters
    ----------
    modes_per_axis : int
        Number of modes ``N`` per axis (even, at least 4).
    box_scale : float
        Factor mapping integer modes to physical wavevectors.
    dealias_fraction : float
        Fraction of the half-width retained by the dealiasing mask.
    """

    modes_per_axis: int
    box_scale: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        n = self.modes_per_axis
        require(isinstance(n, (int, np.integer)) and n >= 4 and n % 2 == 0,
                "CONFIG_INVALID", f"modes_per_axis must be an even integer >= 4, got {n}")
        require(self.box_scale > 0, "CONFIG_INVALID", "box_scale must be positive")
        require(0 < self.dealias_fraction <= 1, "CONFIG_INVALID",
                "dealias_fraction must lie in (0, 1]")

    @property
    def n(self) -> int:
        return int(self.modes_per_axis)

    @cached_property
    def band_limit(self) -> int:
        """Largest retained integer mode magnitude per axis."""
        return max(math.ceil(self.dealias_fraction * self.n / 2 - 1e-9) - 1, 0)

    @cached_property
    def int_modes(self) -> np.ndarray:
        """Integer modes per axis in FFT order."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)

    @cached_property
    def k(self) -> np.ndarray:
        """Physical wavevectors, shape ``(3, N, N, N)``."""
        m = self.int_modes * self.box_scale
        return np.stack(np.meshgrid(m, m, m, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def mask(self) -> np.ndarray:
        """Boolean dealiasing mask (cube ``|n_i| <= band_limit``)."""
        inside = np.abs(self.int_modes) <= self.band_limit
        return inside[:, None, None] & inside[None, :, None] & inside[None, None, :]

    @cached_property
    def shells(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct ``|k|`` values inside the band and the flat index map onto them.

        Returns
        -------
        values : ndarray
            Sorted distinct wavenumber magnitudes inside the band.
        inverse : ndarray
            For every flat lattice index, the shell index, or ``-1`` outside
            the band.
        """
        n2 = np.sum(np.stack(np.meshgrid(self.int_modes, self.int_modes, self.int_modes,
                                         indexing="ij")) ** 2, axis=0).ravel()
        inside = self.mask.ravel()
        uniq, inv = np.unique(n2[inside], return_inverse=True)
        inverse = np.full(n2.shape, -1, dtype=int)
        inverse[inside] = inv
        return np.sqrt(uniq.astype(float)) * self.box_scale, inverse

    @cached_property
    def positions(self) -> np.ndarray:
        """Physical sample points, shape ``(3, N, N, N)``."""
        x = 2 * np.pi * np.arange(self.n) / (self.n * self.box_scale)
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def to_physical(values: np.ndarray) -> np.ndarray:
    """Inverse transform over the last three axes (complex result)."""
    n = values.shape[-1]
    return np.fft.ifftn(values, axes=AXES) * n**3


def to_spectral(values: np.ndarray) -> np.ndarray:
    """Forward transform over the last three axes."""
    n = values.shape[-1]
    return np.fft.fftn(values, axes=AXES) / n**3


def hermitian_partner(values: np.ndarray) -> np.ndarray:
    """Return ``conj(values(-k))`` on the lattice."""
    flipped = np.flip(values, axis=AXES)
    return np.conj(np.roll(flipped, 1, axis=AXES))


def hermitian_defect(values: np.ndarray) -> float:
    """Largest ``|f(k) - conj(f(-k))|`` relative to ``max |f|`` (0 for zero input)."""
    scale = np.max(np.abs(values)) if values.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(values - hermitian_partner(values))) / scale)


def _check_values(values: np.ndarray, shape: tuple) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    require(arr.shape == shape, "GRID_MISMATCH",
            f"values of shape {arr.shape} do not fit grid shape {shape}")
    require(bool(np.all(np.isfinite(arr))), "NAN_DETECTED", "field contains non-finite values")
    return arr


@dataclass
class SpectralField:
    """Complex 3-vector field sampled on a :class:`WaveGrid`."""

    grid: WaveGrid
    values: np.ndarray
    divergence_free: bool = True

    def __post_init__(self):
        n = self.grid.n
        self.values = _check_values(self.values, (3, n, n, n))

    @classmethod
    def zeros(cls, grid: WaveGrid) -> "SpectralField":
        n = grid.n
        return cls(grid, np.zeros((3, n, n, n), dtype=complex))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.values.copy(), self.divergence_free)

    def divergence(self) -> "ScalarSpectralField":
        return ScalarSpectralField(self.grid, np.sum(self.grid.k * self.values, axis=0))

    def divergence_defect(self) -> float:
        """``max |k . f| / (max|k| max|f|)``; 0 for the zero field."""
        scale = np.max(np.abs(self.values)) * max(np.max(self.grid.kmag), 1.0)
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(self.divergence().values)) / scale)

    def hermitian_defect(self) -> float:
        return hermitian_defect(self.values)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.values + other.values,
                             self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.values - other.values,
                             self.divergence_free and other.divergence_free)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.values * scalar, self.divergence_free)

    __rmul__ = __mul__


@dataclass
class ScalarSpectralField:
    """Complex scalar field on a :class:`WaveGrid`."""

    grid: WaveGrid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        self.values = _check_values(self.values, (n, n, n))


AnyField = Union[SpectralField, ScalarSpectralField]


def _same_grid(*fields) -> WaveGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise BorelNSError("GRID_MISMATCH", f"{f.grid} differs from {grid}")
    return grid


def project_values(values: np.ndarray, grid: WaveGrid) -> np.ndarray:
    """Apply ``P_k g = g - k (k.g)/|k|^2`` to raw arrays with components on axis ``-4``.

    The zero mode is passed through unchanged.
    """
    k = grid.k
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    kdotg = np.sum(k * values, axis=-4) / k2
    return values - k * kdotg[..., None, :, :, :]


def hodge_project(g: SpectralField) -> SpectralField:
    """Leray-Hodge projection onto divergence-free fields (identity at ``k = 0``)."""
    return SpectralField(g.grid, project_values(g.values, g.grid), divergence_free=True)


def convolve_values(a: np.ndarray, b: np.ndarray, grid: WaveGrid) -> np.ndarray:
    """Dealiased lattice convolution of broadcastable raw coefficient arrays."""
    mask = grid.mask
    pa = to_physical(np.where(mask, a, 0))
    pb = to_physical(np.where(mask, b, 0))
    return np.where(mask, to_spectral(pa * pb), 0)


def fourier_convolve(f: AnyField, g: AnyField) -> AnyField:
    """Dealiased lattice convolution ``sum_{k'} f(k') g(k - k')``.

    Scalar with scalar gives a scalar; a scalar with a vector convolves every
    component; two vectors are convolved component by component.
    """
    grid = _same_grid(f, g)
    out = convolve_values(f.values, g.values, grid)
    if out.ndim == 3:
        return ScalarSpectralField(grid, out)
    return SpectralField(grid, out, divergence_free=False)


def nonlinear_values(v: np.ndarray, grid: WaveGrid) -> np.ndarray:
    """``-i k_j P[v_j * v]`` on raw arrays of shape ``(3, N, N, N)``."""
    phys = to_physical(np.where(grid.mask, v, 0))
    tensor = to_spectral(phys[:, None] * phys[None, :])
    tensor = np.where(grid.mask, tensor, 0)
    div = np.einsum("jxyz,jixyz->ixyz", grid.k, tensor)
    return project_values(-1j * div, grid)


def nonlinear_term(v: SpectralField) -> SpectralField:
    """Projected advection term ``-i k_j P[v_j * v]``."""
    if not v.divergence_free:
        raise BorelNSError("NOT_DIV_FREE", "nonlinear_term needs a divergence-free field")
    return SpectralField(v.grid, nonlinear_values(v.values, v.grid), divergence_free=True)


PRESETS = ("taylor_green_like", "random_band", "single_mode")


def preset_field(name: str, grid: WaveGrid, **params) -> SpectralField:
    """Build a reproducible divergence-free initial field.

    Parameters
    ----------
    name : str
        One of ``taylor_green_like``, ``random_band``, ``single_mode``.
    grid : WaveGrid
    **params
        ``amplitude`` (all presets, default 1).  ``single_mode`` also takes
        ``k0`` (integer triple) and ``e`` (polarisation, orthogonal to k0).
        ``random_band`` takes ``target_norm`` (overrides ``amplitude``),
        ``mu``, ``beta``, ``seed`` and ``n_max``.

    Raises
    ------
    BorelNSError
        ``UNKNOWN_PRESET`` for an unrecognised name, ``BAD_PARAMS`` for
        invalid parameters.
    """
    builders = {
        "taylor_green_like": _taylor_green,
        "random_band": _random_band,
        "single_mode": _single_mode,
    }
    if name not in builders:
        raise BorelNSError("UNKNOWN_PRESET", f"unknown preset {name!r}; choose from {PRESETS}")
    return builders[name](grid, **params)


def taylor_green_physical(grid: WaveGrid, amplitude: float = 1.0) -> np.ndarray:
    """Real Taylor-Green velocity sampled at the grid points."""
    x, y, z = grid.positions * grid.box_scale
    return amplitude * np.stack([
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros_like(x),
    ])


def _taylor_green(grid: WaveGrid, amplitude: float = 1.0) -> SpectralField:
    require(grid.band_limit >= 1, "BAD_PARAMS", "grid too coarse for the Taylor-Green mode")
    values = to_spectral(taylor_green_physical(grid, amplitude))
    values = np.where(np.abs(values) > 1e-14 * max(abs(amplitude), 1e-300), values, 0)
    return SpectralField(grid, values)


def _single_mode(grid: WaveGrid, amplitude: float = 1.0, k0=(1, 0, 0), e=(0, 1, 0)) -> SpectralField:
    k0 = np.asarray(k0, dtype=int)
    e = np.asarray(e, dtype=complex)
    require(np.any(k0 != 0), "BAD_PARAMS", "k0 must be non-zero")
    require(np.all(np.abs(k0) <= grid.band_limit), "BAD_PARAMS", "k0 outside the dealiased band")
    require(abs(np.dot(k0, e)) < 1e-12 * max(np.linalg.norm(e), 1e-300), "BAD_PARAMS",
            "polarisation must be orthogonal to k0")
    n = grid.n
    values = np.zeros((3, n, n, n), dtype=complex)
    i, j, l = (int(c) % n for c in k0)
    mi, mj, ml = (int(-c) % n for c in k0)
    values[:, i, j, l] = amplitude * e / 2
    values[:, mi, mj, ml] = np.conj(amplitude * e / 2)
    return SpectralField(grid, values)


def _random_band(grid: WaveGrid, amplitude: float = 1.0, target_norm: float | None = None,
                 mu: float = 4.0, beta: float = 1.0, seed: int = 0,
                 n_max: int | None = None) -> SpectralField:
    from .norms import DecayParams, norm_mu_beta

    n_max = grid.band_limit if n_max is None else int(n_max)
    require(1 <= n_max <= grid.band_limit, "BAD_PARAMS", "n_max must lie in [1, band_limit]")
    rng = np.random.default_rng(seed)
    n = grid.n
    raw = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    inside = np.all(np.abs(grid.k / grid.box_scale) <= n_max + 0.5, axis=0) & grid.mask
    weight = (1 + grid.kmag) ** (-mu) * np.exp(-beta * grid.kmag)
    raw = np.where(inside, raw * weight, 0)
    raw[:, 0, 0, 0] = 0
    raw = 0.5 * (raw + hermitian_partner(raw))
    values = project_values(raw, grid)
    field = SpectralField(grid, values)
    target = amplitude if target_norm is None else target_norm
    measured = norm_mu_beta(field, DecayParams(mu, beta))
    require(measured > 0, "BAD_PARAMS", "random band is empty")
    return field * (target / measured)
