"""Weighted Fourier norm, fixed constants and the existence/summability certificate.

The certificate quantities are:

* ``alpha`` -- exponential rate in the Borel variable at which the integral
  equation is a contraction;
* ``l_window`` -- the time window over which the same estimate closes;
* ``a0, b0`` -- Gevrey constants bounding the Taylor coefficients of the
  Borel transform at the origin.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .errors import BorelNSError, require
from .spectral import ScalarSpectralField, SpectralField, WaveGrid

MARGIN = 1e-3
L_CAP = 1e6
SUP_G_HEADROOM = 1.1
C8 = 82.0
C_STAR = 1.07555


@dataclass(frozen=True)
class DecayParams:
    """Polynomial order ``mu`` and exponential rate ``beta`` of the weighted norm."""

    mu: float
    beta: float

    def __post_init__(self):
        if not self.mu > 3:
            raise BorelNSError("MU_TOO_SMALL", f"mu must exceed 3, got {self.mu}")
        require(self.beta >= 0, "CONFIG_INVALID", f"beta must be non-negative, got {self.beta}")

    def shifted(self, dmu: float) -> "DecayParams":
        return DecayParams(self.mu + dmu, self.beta)


def weight(kmag: np.ndarray, decay: DecayParams, dmu: float = 0.0) -> np.ndarray:
    """``(1+|k|)^mu e^{beta|k|}``."""
    return (1 + kmag) ** (decay.mu + dmu) * np.exp(decay.beta * kmag)


def weighted_sup(values: np.ndarray, grid: WaveGrid, decay: DecayParams,
                 dmu: float = 0.0, vector: bool = True) -> np.ndarray:
    """Weighted lattice maximum over the trailing lattice axes.

    ``values`` has shape ``(..., 3, N, N, N)`` when ``vector`` is true and
    ``(..., N, N, N)`` otherwise; the result has the leading shape.
    """
    mod = np.sqrt(np.sum(np.abs(values) ** 2, axis=-4)) if vector else np.abs(values)
    w = weight(grid.kmag, decay, dmu)
    return np.max(mod * w, axis=(-3, -2, -1))


def norm_mu_beta(f, decay: DecayParams, dmu: float = 0.0) -> float:
    """``max_k (1+|k|)^mu e^{beta|k|} |f(k)|`` for a vector or scalar field."""
    vector = isinstance(f, SpectralField)
    if not vector and not isinstance(f, ScalarSpectralField):
        raise TypeError("expected a SpectralField or ScalarSpectralField")
    return float(weighted_sup(f.values, f.grid, decay, dmu, vector=vector))


def q_poly(n: int, y):
    """``Q_n(y) = sum_{j<=n} 2^{n-j} y^j / j!``."""
    y = np.asarray(y, dtype=float)
    total = np.zeros_like(y)
    term = np.ones_like(y)
    for j in range(n + 1):
        total = total + 2.0 ** (n - j) * term
        term = term * y / (j + 1)
    return total if total.ndim else float(total)


def p_poly(n: int, z):
    """``P_n(z) = sum_{j<=n} (n!/j!) z^j``."""
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    # n!/j! accumulated from the top so every coefficient is an exact product
    coeffs = [1.0] * (n + 1)
    for j in range(n - 1, -1, -1):
        coeffs[j] = coeffs[j + 1] * (j + 1)
    power = np.ones_like(z)
    for j in range(n + 1):
        total = total + coeffs[j] * power
        power = power * z
    return total if total.ndim else float(total)


def c0_of_mu(mu: float) -> float:
    """Continuum convolution constant ``32 pi 2^mu / ((mu-1)(mu-2)(mu-3))``."""
    if not mu > 3:
        raise BorelNSError("MU_TOO_SMALL", f"mu must exceed 3, got {mu}")
    return 32 * math.pi * 2**mu / ((mu - 1) * (mu - 2) * (mu - 3))


def c0_lattice(grid: WaveGrid, mu: float) -> float:
    """Lattice analogue ``2^{mu+2} sum_{k in band} (1+|k|)^{-mu}``."""
    if not mu > 3:
        raise BorelNSError("MU_TOO_SMALL", f"mu must exceed 3, got {mu}")
    terms = np.where(grid.mask, (1 + grid.kmag) ** (-mu), 0.0)
    return float(2 ** (mu + 2) * np.sum(np.sort(terms.ravel())))


def c2_of_mu(mu: float, sup_g: float) -> float:
    """``2 pi C0(mu) sup|G|``."""
    return 2 * math.pi * c0_of_mu(mu) * sup_g


def c1_of(mu: float, beta: float) -> float:
    """Constant of the shell-sum estimate with ``Q_{2l}`` weights."""
    if beta <= 0:
        return math.inf
    return (12 * math.pi * 2**mu * beta ** (-8 / 3) + 2 * math.pi * 2**mu * beta**-2
            + c0_of_mu(mu) / (2 * beta))


def _m0_profile(p: float) -> float:
    val, _ = integrate.quad(lambda s: 1 / ((1 + s * s) * (1 + (p - s) ** 2)), 0, p,
                            epsabs=0, epsrel=1e-13, limit=200)
    return (1 + p * p) * val


@lru_cache(maxsize=None)
def m0_scan(p_max: float = 100.0, n_grid: int = 2001) -> float:
    """``sup_p (1+p^2) int_0^p ds / ((1+s^2)(1+(p-s)^2))`` over ``[0, p_max]``."""
    grid = np.linspace(0, p_max, n_grid)
    vals = np.array([_m0_profile(p) for p in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    res = optimize.minimize_scalar(lambda p: -_m0_profile(p), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-10})
    return float(max(vals[i], -res.fun))


def c_star_ratios(l_max: int = 200) -> np.ndarray:
    """``(2l+3)^2 sum_{l1=1}^{l-2} 1/((2l1+1)^2 (2l2+1)^2)`` for ``l = 3..l_max``."""
    out = []
    for l in range(3, l_max + 1):
        l1 = np.arange(1, l - 1)
        l2 = l - 1 - l1
        out.append((2 * l + 3) ** 2 * np.sum(1.0 / ((2 * l1 + 1) ** 2 * (2 * l2 + 1) ** 2)))
    return np.array(out)


def c8_ratios(l_max: int = 200) -> np.ndarray:
    """Normalised factorial-weighted sums whose supremum is bounded by ``C8``.

    Entry ``l - 3`` holds ``(2l+3)^2 / l`` times
    ``sum_{l1} l1! l2! (2l)(2l-1)(2l+1) / (l! (l-1) (2l1+1)^2 (2l2+1)^2)``
    with ``l1 = 1..l-2`` and ``l2 = l-1-l1``.
    """
    out = []
    for l in range(3, l_max + 1):
        l1 = np.arange(1, l - 1)
        l2 = l - 1 - l1
        logw = np.array([math.lgamma(a + 1) + math.lgamma(b + 1) - math.lgamma(l + 1)
                         for a, b in zip(l1, l2)])
        terms = np.exp(logw) * (2 * l) * (2 * l - 1) * (2 * l + 1) / (
            (l - 1) * (2 * l1 + 1.0) ** 2 * (2 * l2 + 1.0) ** 2)
        out.append((2 * l + 3) ** 2 / l * np.sum(terms))
    return np.array(out)


@dataclass(frozen=True)
class PaperConstants:
    """Fixed constants entering the inequalities.

    ``c2`` is the value used by the certificate: continuum ``C0`` times the
    scanned kernel supremum with ``sup_g_headroom`` applied.  The lattice
    variants are reported next to it.
    """

    mu: float
    beta: float
    c0: float
    c2: float
    m0: float
    sup_g: float
    c1: float
    c8: float = C8
    c_star: float = C_STAR
    sup_g_headroom: float = SUP_G_HEADROOM
    c0_lattice: float | None = None
    c2_lattice: float | None = None

    @classmethod
    def build(cls, decay: DecayParams, grid: WaveGrid | None = None,
              sup_g: float | None = None, headroom: float = SUP_G_HEADROOM) -> "PaperConstants":
        """Evaluate every constant for ``decay``; ``sup_g`` defaults to the kernel scan."""
        if sup_g is None:
            from .bessel import kernel_sup_scan

            sup_g = kernel_sup_scan(200.0, 100_000)
        c0 = c0_of_mu(decay.mu)
        c0l = c2l = None
        if grid is not None:
            c0l = c0_lattice(grid, decay.mu)
            c2l = 2 * math.pi * c0l * sup_g * headroom
        return cls(mu=decay.mu, beta=decay.beta, c0=c0, c2=c2_of_mu(decay.mu, sup_g * headroom),
                   m0=m0_scan(), sup_g=sup_g, c1=c1_of(decay.mu, decay.beta),
                   sup_g_headroom=headroom, c0_lattice=c0l, c2_lattice=c2l)

    def to_dict(self) -> dict:
        return asdict(self)


def ensure2_lhs(alpha: float, norm_v0: float, norm_v1: float, c2: float) -> float:
    """Left side of the existence-rate condition."""
    return 2 * c2 * math.sqrt(math.pi) * alpha**-0.5 * (norm_v0 + 2 * norm_v1 / alpha)


def ensure3_lhs(window: float, norm_v0: float, norm_v1: float, c2: float) -> float:
    """Left side of the time-window condition."""
    return 2 * c2 * math.sqrt(window) * (norm_v0 + 2 * window * norm_v1)


def _bisect(fun, lo: float, hi: float, rel_tol: float = 1e-9):
    """Bisection on a monotone predicate: ``fun(lo)`` false, ``fun(hi)`` true."""
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if fun(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def alpha_min(norm_v0: float, norm_v1: float, consts: PaperConstants,
              margin: float = MARGIN) -> float:
    """Smallest ``alpha >= 1`` satisfying the existence-rate condition with ``margin``."""
    require(norm_v0 >= 0 and norm_v1 >= 0, "CONFIG_INVALID", "norms must be non-negative")
    target = 1 - margin
    ok = lambda a: ensure2_lhs(a, norm_v0, norm_v1, consts.c2) <= target
    if ok(1.0):
        return 1.0
    hi = 2.0
    while not ok(hi):
        hi *= 2
    return _bisect(ok, hi / 2, hi)[1]


def l_max(norm_v0: float, norm_v1: float, consts: PaperConstants,
          margin: float = MARGIN, cap: float = L_CAP) -> float:
    """Largest window ``L <= cap`` satisfying the time-window condition with ``margin``."""
    require(norm_v0 >= 0 and norm_v1 >= 0, "CONFIG_INVALID", "norms must be non-negative")
    target = 1 - margin
    ok = lambda w: ensure3_lhs(w, norm_v0, norm_v1, consts.c2) <= target
    if ok(cap):
        return cap
    lo = 1.0
    while not ok(lo):
        lo /= 2
    hi = 2 * lo
    while ok(hi):
        lo, hi = hi, 2 * hi
    return _bisect(lambda w: not ok(w), lo, hi)[0]


def gevrey_conditions(a0: float, b0: float, norm_v0: float, norm_v1: float,
                      decay: DecayParams, consts: PaperConstants) -> dict:
    """Slack of the three Gevrey constraints (each entry must be ``>= 0``)."""
    beta, mu, c0 = decay.beta, decay.mu, consts.c0
    k_first = 18 / beta**2 * norm_v1 * (1 + beta * c0 * norm_v0)
    first = a0 * b0 - k_first
    second = a0 * b0**2 - (3 * a0 * b0 / beta**2
                          + a0 * b0 * norm_v0 * 2**mu * 36 * math.pi / beta**2
                          + c0 / beta * norm_v1**2)
    third = b0**2 - (6 * b0 / beta**2 + 2**mu * 18 * math.pi / beta**3 * b0 * norm_v0
                     + 2**mu * 18 * math.pi / beta**3 * norm_v1 + 9 * a0 * 2**mu / beta**3)
    return {"first": first, "second": second, "third": third}


def gevrey_a0_b0(norm_v0: float, norm_v1: float, decay: DecayParams,
                 consts: PaperConstants) -> tuple[float, float]:
    """Admissible Gevrey pair ``(A0, B0)``.

    ``A0`` is tied to ``B0`` by equality in the first-coefficient constraint;
    ``B0`` starts at ``6/beta^2`` (the root of the data-free constraint),
    doubles until both remaining constraints hold, then is refined by
    bisection.  The admissible set is an interval ``[B*, inf)``, so the
    returned pair is its left end up to a relative ``1e-9``.
    """
    if decay.beta <= 0:
        raise BorelNSError("BETA_ZERO", "Gevrey constants need beta > 0")
    beta = decay.beta
    k_first = 18 / beta**2 * norm_v1 * (1 + beta * consts.c0 * norm_v0)

    def admissible(b0: float) -> bool:
        a0 = k_first / b0
        slack = gevrey_conditions(a0, b0, norm_v0, norm_v1, decay, consts)
        return slack["second"] >= 0 and slack["third"] >= 0

    b_start = 6 / beta**2
    if admissible(b_start):
        b0 = b_start
    else:
        hi = 2 * b_start
        while not admissible(hi):
            hi *= 2
        b0 = _bisect(admissible, hi / 2, hi)[1]
    return k_first / b0, b0


@dataclass
class GevreyConstants:
    """Certificate for one set of initial data."""

    alpha: float
    l_window: float
    a0: float | None
    b0: float | None
    a_cap: float | None
    b_cap: float | None
    norm_v0: float
    norm_v1: float
    checks: dict = field(default_factory=dict)

    @classmethod
    def certify(cls, norm_v0: float, norm_v1: float, decay: DecayParams,
                consts: PaperConstants) -> "GevreyConstants":
        """Compute every certificate quantity and replay each defining inequality."""
        alpha = alpha_min(norm_v0, norm_v1, consts)
        window = l_max(norm_v0, norm_v1, consts)
        checks = {
            "ensure2": ensure2_lhs(alpha, norm_v0, norm_v1, consts.c2) < 1,
            "ensure3": ensure3_lhs(window, norm_v0, norm_v1, consts.c2) < 1,
            "window_at_inverse_alpha": ensure3_lhs(1 / alpha, norm_v0, norm_v1, consts.c2) < 1,
        }
        a0 = b0 = a_cap = b_cap = None
        if decay.beta > 0:
            a0, b0 = gevrey_a0_b0(norm_v0, norm_v1, decay, consts)
            slack = gevrey_conditions(a0, b0, norm_v0, norm_v1, decay, consts)
            tol = 1e-9 * max(1.0, a0 * b0**2, b0**2)
            checks["gevrey"] = all(v >= -tol for v in slack.values())
            a_cap = 3 * norm_v1
            b_cap = _b_cap(a_cap, norm_v0, norm_v1, decay, consts)
        return cls(alpha=alpha, l_window=window, a0=a0, b0=b0, a_cap=a_cap, b_cap=b_cap,
                   norm_v0=norm_v0, norm_v1=norm_v1, checks=checks)

    def to_dict(self) -> dict:
        return asdict(self)


def _b_cap(a_cap: float, norm_v0: float, norm_v1: float, decay: DecayParams,
           consts: PaperConstants) -> float:
    """Low-order bound on the recentred-series constant ``B``.

    Combines the first-step constraint with the data-free term of the
    general-step constraint; the remaining terms carry an unquantified
    absolute constant and are not used.
    """
    beta = decay.beta
    floor = 100 / (9 * beta**2)
    if a_cap == 0:
        return floor
    first = (2 * consts.c1 * norm_v0 * a_cap + consts.c1 * a_cap**2
             + 2 * consts.c0 / beta * norm_v0 * norm_v1) / a_cap
    return max(first, floor)
