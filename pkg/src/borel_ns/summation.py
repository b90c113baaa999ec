"""Laplace resummation, Gevrey truncation error and growth-rate estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .borel import BorelField, gregory_weights
from .errors import BorelNSError, require
from .norms import DecayParams, norm_mu_beta
from .spectral import SpectralField, hermitian_defect
from .taylor import TaylorCoeffs


@dataclass
class SummationResult:
    """Laplace-summed field at one time with its error budget."""

    t: complex
    field: SpectralField
    tail_error: float
    truncation_bound: float
    quadrature_estimate: float
    norm_mu_beta: float

    def to_dict(self) -> dict:
        t = complex(self.t)
        return {"t_real": t.real, "t_imag": t.imag, "tail_error": self.tail_error,
                "truncation_bound": self.truncation_bound,
                "quadrature_estimate": self.quadrature_estimate,
                "norm_mu_beta": self.norm_mu_beta}


def _companion_weights(u: BorelField, order: int = 6) -> np.ndarray:
    g = u.p_grid
    return 2 * g.s * gregory_weights(g.n_nodes, g.h, order)


def laplace_sum(u: BorelField, v0: SpectralField, t: complex, *, alpha: float,
                decay: DecayParams, norm_v1: float | None = None) -> SummationResult:
    """``v(k, t) = v0(k) + int_0^inf e^{-p/t} U(k, p) dp`` truncated at ``p_max``.

    Parameters
    ----------
    u : BorelField
        Converged Borel transform.
    v0 : SpectralField
        Initial data.
    t : complex
        Time with ``Re(1/t) > alpha``.
    alpha : float
        Certified exponential rate of ``u``.
    decay : DecayParams
        Norm used for the error budget.
    norm_v1 : float, optional
        ``||v1||_{mu,beta}``; defaults to the norm of ``u`` at ``p = 0``.

    Notes
    -----
    ``tail_error`` adds the bound ``2||v1|| e^{(alpha - Re(1/t)) p_max} /
    (Re(1/t) - alpha)`` on the neglected tail to a quadrature estimate (the
    difference between the production rule and a lower-order companion).
    """
    if u.grid != v0.grid:
        raise BorelNSError("GRID_MISMATCH", "u and v0 live on different grids")
    t = complex(t)
    require(t != 0, "T_OUT_OF_REGION", "t must be non-zero")
    rate = (1 / t).real
    if rate <= alpha:
        raise BorelNSError("T_OUT_OF_REGION", f"Re(1/t)={rate} does not exceed alpha={alpha}")
    g = u.p_grid
    kernel = np.exp(-g.nodes / t)
    if t.imag == 0:
        kernel = kernel.real
    integral = np.tensordot(g.weights * kernel, u.values, axes=(0, 0))
    companion = np.tensordot(_companion_weights(u) * kernel, u.values, axes=(0, 0))
    field = SpectralField(u.grid, v0.values + integral)
    quad = norm_mu_beta(SpectralField(u.grid, integral - companion, False), decay)
    n1 = float(u.norms(decay)[0]) if norm_v1 is None else norm_v1
    tail = 2 * n1 * math.exp((alpha - rate) * g.p_max) / (rate - alpha)
    return SummationResult(t=t, field=field, tail_error=tail + quad, truncation_bound=tail,
                           quadrature_estimate=quad, norm_mu_beta=norm_mu_beta(field, decay))


def physical_snapshot(v: SpectralField, n_points: int | None = None) -> np.ndarray:
    """Real physical velocity sampled on ``n_points`` per axis, shape ``(3, n, n, n)``.

    Coefficients are zero-padded when ``n_points`` exceeds the lattice size
    (the unpaired Nyquist plane is dropped then).
    """
    grid = v.grid
    n = grid.n
    n_points = n if n_points is None else int(n_points)
    require(n_points >= n and n_points % 2 == 0, "CONFIG_INVALID",
            "n_points must be an even integer not below the lattice size")
    if hermitian_defect(v.values) > 1e-10:
        raise BorelNSError("ASYMMETRIC_FIELD", "field is not Hermitian-symmetric")
    if n_points == n:
        padded = v.values
    else:
        padded = np.zeros((3, n_points, n_points, n_points), dtype=complex)
        modes = grid.int_modes
        keep = modes > -n // 2
        src = np.flatnonzero(keep)
        dst = modes[keep] % n_points
        padded[np.ix_(range(3), dst, dst, dst)] = v.values[np.ix_(range(3), src, src, src)]
    phys = np.fft.ifftn(padded, axes=(-3, -2, -1)) * n_points**3
    scale = max(float(np.max(np.abs(phys))), 1e-300)
    if float(np.max(np.abs(phys.imag))) > 1e-10 * scale:
        raise BorelNSError("ASYMMETRIC_FIELD", "physical field has an imaginary residue")
    return phys.real


def physical_sup(v: SpectralField, n_points: int | None = None) -> float:
    """``max_x |v(x)|`` over a physical sample."""
    phys = physical_snapshot(v, n_points)
    return float(np.max(np.sqrt(np.sum(phys**2, axis=0))))


def series_cutoff(t: float, b0: float) -> int:
    """Optimal truncation order ``m(t) = floor(1/(B0 t))``."""
    return int(math.floor(1 / (b0 * t)))


@dataclass
class TruncationReport:
    """Optimal-truncation error against a reference solution."""

    t: float
    m: int
    error: float
    bound: float
    quadrature_budget: float

    @property
    def passed(self) -> bool:
        return self.error <= self.bound + self.quadrature_budget

    @property
    def slack(self) -> float:
        return self.bound + self.quadrature_budget - self.error


def truncated_series_error(coeffs: TaylorCoeffs, t: float, b0: float, a0: float,
                           reference: SpectralField, quadrature_budget: float = 0.0,
                           n_points: int | None = None) -> TruncationReport:
    """Compare ``v0 + sum_{m<=m(t)} v_m t^m`` with ``reference`` in physical sup norm.

    The bound is ``A0 m^{1/2} e^{-m}`` plus ``quadrature_budget``.
    """
    m = series_cutoff(t, b0)
    if m == 0:
        raise BorelNSError("T_TOO_LARGE", f"m(t) = 0 for t={t}, B0={b0}")
    if m - 1 > coeffs.l_max:
        raise BorelNSError("INSUFFICIENT_COEFFS", f"need W^[{m - 1}] for m(t)={m}")
    total = coeffs.v0.values.copy()
    for j in range(1, m + 1):
        total = total + math.factorial(j - 1) * coeffs.w(j - 1).values * t**j
    diff = SpectralField(coeffs.grid, reference.values - total, False)
    err = physical_sup(diff, n_points)
    return TruncationReport(t=t, m=m, error=err, bound=a0 * math.sqrt(m) * math.exp(-m),
                            quadrature_budget=quadrature_budget)


@dataclass
class GrowthFit:
    """Exponential growth rate of ``||U(., p)||`` over the top of the p-grid."""

    p_window: tuple
    alpha_hat: float
    r_squared: float


def growth_rate(u: BorelField, window_fraction: float, decay: DecayParams) -> GrowthFit:
    """Least-squares slope of ``log ||U(., p)||_{mu,beta}`` on the last part of the grid."""
    require(0 < window_fraction < 1, "CONFIG_INVALID", "window_fraction must lie in (0, 1)")
    p = u.p_grid.nodes
    norms = u.norms(decay)
    lo = (1 - window_fraction) * p[-1]
    sel = p >= lo
    if np.count_nonzero(sel) < 3 or np.any(norms[sel] <= 1e-300):
        raise BorelNSError("DEGENERATE_FIT", "norms vanish or underflow in the fit window")
    x, y = p[sel], np.log(norms[sel])
    coef = np.polyfit(x, y, 1)
    res = y - np.polyval(coef, x)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if tot == 0 else float(max(0.0, 1 - np.sum(res**2) / tot))
    return GrowthFit(p_window=(float(x[0]), float(x[-1])), alpha_hat=float(coef[0]), r_squared=r2)
