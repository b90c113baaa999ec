"""Taylor coefficients of the Borel transform at ``p = 0``.

Writing ``U(k, p) = v1(k) + sum_{l>=1} W^[l](k) p^l`` and matching powers of
``p`` in the differential form of the integral equation gives

    2 W^[1] = -|k|^2 v1 - i k_j P[v0_j * v1 + v1_j * v0]
    6 W^[2] = -|k|^2 W^[1] - i k_j P[v0_j * W^[1] + W^[1]_j * v0 + v1_j * v1]

and, for ``l >= 2``,

    (l+1)(l+2) W^[l+1] = -|k|^2 W^[l]
        - i k_j P[ sum_{l1=1}^{l-2} (l1! l2!/l!) W^[l1]_j * W^[l2] ]      (l2 = l-1-l1)
        - i k_j P[ v0_j * W^[l] + W^[l]_j * v0 + (v1_j * W^[l-1] + W^[l-1]_j * v1)/l ].

The Laplace transform of ``p^l`` is ``l! t^{l+1}``, so the time-domain
coefficients are ``v_m = (m-1)! W^[m-1]`` with ``W^[0] = v1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BorelNSError
from .norms import DecayParams, q_poly
from .spectral import SpectralField, WaveGrid, project_values, to_physical, to_spectral


def _divergence_form(tensor_phys: np.ndarray, grid: WaveGrid) -> np.ndarray:
    """``-i k_j P[T_ji]`` for a physical-space tensor ``T`` of shape ``(3, 3, N, N, N)``."""
    spec = np.where(grid.mask, to_spectral(tensor_phys), 0)
    div = np.einsum("jxyz,jixyz->ixyz", grid.k, spec)
    return project_values(-1j * div, grid)


def _phys(values: np.ndarray, grid: WaveGrid) -> np.ndarray:
    return to_physical(np.where(grid.mask, values, 0))


def _sym_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a_j b_i + b_j a_i`` as a ``(3, 3, ...)`` tensor."""
    return a[:, None] * b[None, :] + b[:, None] * a[None, :]


@dataclass
class TaylorCoeffs:
    """Coefficients ``W^[1..l_max]`` together with the data that generated them."""

    v0: SpectralField
    base: SpectralField
    coeffs: list = field(default_factory=list)
    nonlinear: bool = True

    @property
    def l_max(self) -> int:
        return len(self.coeffs)

    @property
    def grid(self) -> WaveGrid:
        return self.base.grid

    def w(self, l: int) -> SpectralField:
        """``W^[l]``; ``W^[0]`` is the base ``v1``."""
        if l == 0:
            return self.base
        if l < 0 or l > self.l_max:
            raise BorelNSError("INSUFFICIENT_COEFFS", f"W^[{l}] not computed (l_max={self.l_max})")
        return self.coeffs[l - 1]


def first_coeffs(v0: SpectralField, v1: SpectralField,
                 nonlinear: bool = True) -> tuple[SpectralField, SpectralField]:
    """``W^[1]`` and ``W^[2]`` from their closed forms."""
    if v0.grid != v1.grid:
        raise BorelNSError("GRID_MISMATCH", "v0 and v1 live on different grids")
    grid = v0.grid
    k2 = grid.k2
    w1 = -k2 * v1.values
    if nonlinear:
        p0, p1 = _phys(v0.values, grid), _phys(v1.values, grid)
        w1 = w1 + _divergence_form(_sym_product(p0, p1), grid)
    w1 = w1 / 2
    w2 = -k2 * w1
    if nonlinear:
        pw1 = _phys(w1, grid)
        w2 = w2 + _divergence_form(_sym_product(p0, pw1) + p1[:, None] * p1[None, :], grid)
    w2 = w2 / 6
    return SpectralField(grid, w1), SpectralField(grid, w2)


def _weight(l1: int, l2: int, l: int) -> float:
    return math.exp(math.lgamma(l1 + 1) + math.lgamma(l2 + 1) - math.lgamma(l + 1))


def recursion_step(coeffs: TaylorCoeffs, v0: SpectralField | None = None,
                   v1: SpectralField | None = None) -> SpectralField:
    """Next coefficient ``W^[l+1]`` from ``W^[1..l]`` with ``l = coeffs.l_max >= 2``."""
    l = coeffs.l_max
    if l < 2:
        raise BorelNSError("INSUFFICIENT_COEFFS", "the recursion starts from W^[1], W^[2]")
    v0 = coeffs.v0 if v0 is None else v0
    v1 = coeffs.base if v1 is None else v1
    grid = coeffs.grid
    out = -grid.k2 * coeffs.w(l).values
    if coeffs.nonlinear:
        phys = {j: _phys(coeffs.w(j).values, grid) for j in range(1, l + 1)}
        p0, p1 = _phys(v0.values, grid), _phys(v1.values, grid)
        tensor = _sym_product(p0, phys[l]) + _sym_product(p1, phys[l - 1]) / l
        for l1 in range(1, l - 1):
            l2 = l - 1 - l1
            tensor = tensor + _weight(l1, l2, l) * phys[l1][:, None] * phys[l2][None, :]
        out = out + _divergence_form(tensor, grid)
    return SpectralField(grid, out / ((l + 1) * (l + 2)))


def taylor_coefficients(v0: SpectralField, v1: SpectralField, l_max: int = 16,
                        nonlinear: bool = True) -> TaylorCoeffs:
    """Compute ``W^[1..l_max]``."""
    if l_max < 1:
        raise BorelNSError("INSUFFICIENT_COEFFS", "l_max must be at least 1")
    w1, w2 = first_coeffs(v0, v1, nonlinear=nonlinear)
    tc = TaylorCoeffs(v0=v0, base=v1, coeffs=[w1, w2][:l_max], nonlinear=nonlinear)
    while tc.l_max < l_max:
        tc.coeffs.append(recursion_step(tc))
    return tc


def gevrey_bound(grid: WaveGrid, l: int, a0: float, b0: float, decay: DecayParams) -> np.ndarray:
    """Nodewise Gevrey bound for ``|W^[l](k)|``."""
    y = decay.beta * grid.kmag
    return (np.exp(-y) * a0 * b0**l * (1 + grid.kmag) ** (-decay.mu)
            * q_poly(2 * l, y) / (2 * l + 1) ** 2)


@dataclass
class GevreyReport:
    """Outcome of the nodewise Gevrey check."""

    l_pass: int
    max_ratio: float
    ratios: list

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0


def gevrey_check(coeffs: TaylorCoeffs, a0: float, b0: float, decay: DecayParams,
                 l_max: int | None = None) -> GevreyReport:
    """Compare ``|W^[l](k)|`` with the Gevrey bound for ``l = 1..l_max``.

    ``l_pass`` is the deepest ``l`` such that every order up to it passes.
    """
    l_max = coeffs.l_max if l_max is None else min(l_max, coeffs.l_max)
    ratios = []
    l_pass = 0
    broken = False
    for l in range(1, l_max + 1):
        mod = np.sqrt(np.sum(np.abs(coeffs.w(l).values) ** 2, axis=0))
        if not np.any(mod):
            r = 0.0
        else:
            bound = gevrey_bound(coeffs.grid, l, a0, b0, decay)
            r = float(np.max(np.where(mod > 0, mod / bound, 0.0)))
        ratios.append(r)
        if r <= 1.0 and not broken:
            l_pass = l
        else:
            broken = True
    return GevreyReport(l_pass=l_pass, max_ratio=max(ratios, default=0.0), ratios=ratios)


@dataclass
class SeriesValue:
    """Partial sum of the Taylor series and a bound on the neglected tail."""

    field: SpectralField
    p: float
    tail_bound: float | None


def series_eval(coeffs: TaylorCoeffs, p: float, b0: float | None = None,
                a0: float | None = None) -> SeriesValue:
    """``v1 + sum_{l<=l_max} W^[l] p^l``.

    When ``b0`` is given the point must lie in the certified disc
    ``p < 1/(4 b0)``; with ``a0`` as well, a bound on the largest neglected
    nodal magnitude is attached.
    """
    if b0 is not None and p >= 1 / (4 * b0):
        raise BorelNSError("OUT_OF_RADIUS", f"p={p} outside radius 1/(4 B0)={1 / (4 * b0)}")
    total = coeffs.base.values.copy()
    power = 1.0
    for l in range(1, coeffs.l_max + 1):
        power *= p
        total = total + coeffs.w(l).values * power
    tail = None
    if a0 is not None and b0 is not None:
        r = 4 * b0 * p
        lm = coeffs.l_max
        tail = a0 * r ** (lm + 1) / ((1 - r) * (2 * lm + 3) ** 2)
    return SeriesValue(SpectralField(coeffs.grid, total), p, tail)


@dataclass
class VmCoefficient:
    """Time-domain coefficient ``v_m`` with its Gevrey bound."""

    m: int
    spectral: SpectralField
    sup: float
    bound: float | None

    @property
    def passed(self) -> bool:
        return self.bound is None or self.sup <= self.bound


def v_m_coefficients(coeffs: TaylorCoeffs, m_max: int, a0: float | None = None,
                     b0: float | None = None, n_points: int | None = None) -> list[VmCoefficient]:
    """``v_m = (m-1)! W^[m-1]`` for ``m = 1..m_max`` with physical sup norms.

    The sup is taken over a physical sample of ``n_points`` per axis
    (default twice the lattice size).
    """
    from .summation import physical_snapshot

    if m_max - 1 > coeffs.l_max:
        raise BorelNSError("INSUFFICIENT_COEFFS", f"v_{m_max} needs W^[{m_max - 1}]")
    n_points = 2 * coeffs.grid.n if n_points is None else n_points
    out = []
    for m in range(1, m_max + 1):
        spec = coeffs.w(m - 1) * float(math.factorial(m - 1))
        phys = physical_snapshot(spec, n_points)
        sup = float(np.max(np.sqrt(np.sum(phys**2, axis=0))))
        bound = None
        if a0 is not None and b0 is not None:
            bound = math.factorial(m) * a0 * b0**m
        out.append(VmCoefficient(m=m, spectral=spec, sup=sup, bound=bound))
    return out
