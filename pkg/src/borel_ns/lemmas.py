"""Randomised numerical checks of the convolution and polynomial inequalities.

Each check draws admissible inputs, evaluates both sides and records the
largest ratio ``LHS / RHS``.  A check passes when that ratio does not exceed
``1 + 1e-9``.

Three-dimensional convolution integrals of radial weights are reduced with
bipolar coordinates ``r = |k'|``, ``w = |k - k'|``:

    |k| int F(r, w) dk' = pi int_{u >= |k|} int_{|v| <= |k|} r w F dv du,

where ``u = r + w`` and ``v = r - w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import BorelNSError
from .norms import (DecayParams, c0_lattice, c1_of, m0_scan, norm_mu_beta, p_poly, q_poly)
from .spectral import ScalarSpectralField, WaveGrid, convolve_values, hermitian_partner

PASS_TOL = 1e-9

LEMMAS = ("lem0.1", "lema2", "lema1.1", "lema1.2", "lema0.0", "lema1.3", "lema1.3.0",
          "lema1.4", "lemaQ2l", "lemBanach")


@dataclass
class LemmaReport:
    """Largest observed ``LHS / RHS`` over the trials."""

    lemma_id: str
    trials: int
    max_ratio: float
    passed: bool
    worst: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lemma_id": self.lemma_id, "trials": self.trials, "max_ratio": self.max_ratio,
                "passed": self.passed, "worst": self.worst, "extra": self.extra}


def _fact(n: int) -> float:
    return float(math.factorial(n))


def _exp_sum(y: float, n: int) -> float:
    return float(sum(y**j / _fact(j) for j in range(n + 1)))


# one-dimensional polynomial identities --------------------------------------

def _lema2_sides(m: int, n: int, y: float) -> tuple[float, float]:
    x, w = np.polynomial.legendre.leggauss((m + n) // 2 + 4)
    rho = 0.5 * (x + 1)
    lhs = y ** (m + 1) * 0.5 * np.dot(w, rho**m * p_poly(n, y * (1 - rho)))
    rhs = _fact(m) * _fact(n) * sum(y ** (m + j + 1) / _fact(m + j + 1) for j in range(n + 1))
    return float(lhs), float(rhs)


def _tail_integral(m: int, n: int, y: float) -> float:
    """``y^{m+1} int_1^inf e^{-2y(rho-1)} rho^m P_n(y(rho-1)) drho``.

    Substituting ``tau = y(rho - 1)`` gives ``int_0^inf e^{-2 tau} (y + tau)^m
    P_n(tau) dtau``, integrated exactly by Gauss-Laguerre.
    """
    x, w = np.polynomial.laguerre.laggauss((m + n) // 2 + 4)
    tau = x / 2
    return float(0.5 * np.dot(w, (y + tau) ** m * p_poly(n, tau)))


def _lema11_sides(m: int, n: int, y: float) -> tuple[float, float]:
    return _tail_integral(m, n, y), 2.0**-m * _fact(m + n) * _exp_sum(y, m)


def _lema12_sides(m: int, n: int, y: float) -> tuple[float, float]:
    # on [0, 1] the exponent vanishes and the integrand is a polynomial
    x, w = np.polynomial.legendre.leggauss((m + n) // 2 + 4)
    rho = 0.5 * (x + 1)
    head = y ** (m + 1) * 0.5 * np.dot(w, rho**m * p_poly(n, y * (1 - rho)))
    lhs = float(head) + _tail_integral(m, n, y)
    return lhs, _fact(m) * _fact(n) * q_poly(m + n + 1, y)


# bipolar convolution integrals -------------------------------------------

_V_NODES = np.polynomial.legendre.leggauss(48)


def _bipolar(kmag: float, integrand, decay_rate: float, exact_degree: int | None = None) -> float:
    """``pi int_{u>=K} int_{|v|<=K} r w F(r, w) dv du`` with ``F`` including ``e^{-rate u}``.

    ``integrand(r, w)`` must omit the factor ``e^{-rate (u - K)}``, which is
    handled by the outer rule.  With ``exact_degree`` the remaining integrand is
    a polynomial of that total degree and Gauss-Laguerre in ``u`` is exact.
    """
    xv, wv = _V_NODES
    if exact_degree is not None:
        nv = exact_degree // 2 + 3
        xv, wv = np.polynomial.legendre.leggauss(nv)
        xu, wu = np.polynomial.laguerre.laggauss(exact_degree // 2 + 3)
        u = kmag + xu / decay_rate
        v = kmag * xv
        r = (u[:, None] + v[None, :]) / 2
        w = (u[:, None] - v[None, :]) / 2
        vals = r * w * integrand(r, w)
        return float(math.pi * kmag / decay_rate * wu @ vals @ wv)

    def inner(u):
        v = kmag * xv
        r = (u + v) / 2
        w = (u - v) / 2
        return kmag * np.dot(wv, r * w * integrand(r, w)) * math.exp(-decay_rate * (u - kmag))

    val, _ = integrate.quad(inner, kmag, np.inf, epsabs=0, epsrel=1e-11, limit=400)
    return math.pi * val


def _lema00_sides(m: int, n: int, q: float) -> tuple[float, float]:
    lhs = _bipolar(q, lambda r, w: r**m * w**n, 1.0, exact_degree=m + n + 2)
    rhs = 2 * math.pi * _fact(m + 1) * _fact(n + 1) * q_poly(m + n + 3, q)
    return lhs, rhs


def _radial(mu: float, beta: float):
    return lambda r, w: (1 + r) ** (-mu) * (1 + w) ** (-mu)


def _lema13_sides(mu, beta, k, m, n) -> tuple[float, float]:
    base = _radial(mu, beta)
    lhs = _bipolar(k, lambda r, w: base(r, w) * (beta * r) ** m * (beta * w) ** n, beta)
    lhs *= math.exp(-beta * k)
    rhs = (math.pi * 2 ** (mu + 1) * math.exp(-beta * k) * _fact(m) * _fact(n)
           / (beta**3 * (1 + k) ** mu) * (m + n + 2) * q_poly(m + n + 2, beta * k))
    return lhs, rhs


def _lema130_sides(mu, beta, k, n) -> tuple[float, float]:
    base = _radial(mu, beta)
    lhs = _bipolar(k, lambda r, w: base(r, w) * (beta * w) ** n, beta) * math.exp(-beta * k)
    q = beta * k
    rhs = (2 ** (mu + 1) * math.pi * math.exp(-beta * k) / (beta**2 * (1 + k) ** mu)
           * (_fact(n - 1) * q_poly(n + 1, q)
              + 3 * _fact(n + 1) * q ** (2 / 3) / (2 * beta ** (2 / 3)) * _exp_sum(q, n + 1)))
    return lhs, rhs


def _lema14_sides(mu, beta, k, l1, l2) -> tuple[float, float]:
    base = _radial(mu, beta)
    lhs = _bipolar(k, lambda r, w: base(r, w) * q_poly(2 * l1, beta * r)
                   * q_poly(2 * l2, beta * w), beta) * math.exp(-beta * k)
    big = 2 * l1 + 2 * l2
    rhs = (2 ** (mu + 1) * math.pi * math.exp(-beta * k) / (3 * beta**3 * (1 + k) ** mu)
           * (big + 1) * (big + 2) * (big + 3) * q_poly(big + 2, beta * k))
    return lhs, rhs


def _lemaq2l_sides(mu, beta, k, l) -> tuple[float, float]:
    base = _radial(mu, beta)
    lhs = _bipolar(k, lambda r, w: base(r, w) * q_poly(2 * l, beta * w), beta)
    lhs *= math.exp(-beta * k) / (l + 1) ** (2 / 3)
    rhs = (c1_of(mu, beta) * math.exp(-beta * k) / (1 + k) ** mu
           * (2 * l + 1) * q_poly(2 * l + 2, beta * k))
    return lhs, rhs


# lattice convolution ------------------------------------------------------

def _random_scalar(grid: WaveGrid, decay: DecayParams, rng) -> np.ndarray:
    n = grid.n
    w = (1 + grid.kmag) ** (-decay.mu) * np.exp(-decay.beta * grid.kmag)
    radius = np.sqrt(rng.random((n, n, n)))
    phase = np.exp(2j * np.pi * rng.random((n, n, n)))
    keep = rng.random((n, n, n)) < rng.uniform(0.2, 1.0)
    vals = np.where(grid.mask & keep, radius * phase * w, 0)
    if rng.random() < 0.5:
        vals = 0.5 * (vals + hermitian_partner(vals))
    if rng.random() < 0.2:
        vals = np.where(grid.mask, w, 0).astype(complex)
    return vals


def _lem01(trials: int, rng, grid: WaveGrid, decay: DecayParams):
    c0 = c0_lattice(grid, decay.mu)
    worst, best = {}, 0.0
    for _ in range(trials):
        a = _random_scalar(grid, decay, rng)
        b = _random_scalar(grid, decay, rng)
        fa, fb = ScalarSpectralField(grid, a), ScalarSpectralField(grid, b)
        na, nb = norm_mu_beta(fa, decay), norm_mu_beta(fb, decay)
        if na == 0 or nb == 0:
            continue
        conv = ScalarSpectralField(grid, convolve_values(a, b, grid))
        r = norm_mu_beta(conv, decay) / (c0 * na * nb)
        if r > best:
            best, worst = r, {"norm_f": na, "norm_g": nb}
    return best, worst, {"c0_lattice": c0}


# p-profile algebra --------------------------------------------------------

def _banach(trials: int, rng):
    m0 = m0_scan()
    best, worst = 0.0, {}
    x, wq = np.polynomial.legendre.leggauss(200)
    p_grid = np.linspace(0.0, 30.0, 121)
    n_sup = n_l1 = n_supl = 0
    for t in range(trials):
        kind = t % 3
        if kind == 0:
            n_sup += 1
            # u = e^{alpha p} phi / (1+p^2) with max phi = 1, so ||u|| = 1
            c = rng.uniform(0, 1, size=2)
            om = rng.uniform(0.05, 2.0, size=2)
            th = rng.uniform(0, np.pi, size=2)
            phi = [lambda s, i=i: 1 - c[i] * np.sin(om[i] * s + th[i]) ** 2 for i in range(2)]
            vals = []
            for p in p_grid:
                if p == 0:
                    vals.append(0.0)
                    continue
                s = 0.5 * p * (x + 1)
                f = phi[0](s) * phi[1](p - s) / ((1 + s**2) * (1 + (p - s) ** 2))
                vals.append((1 + p * p) * 0.5 * p * np.dot(wq, f))
            r = max(vals) / m0
            info = {"part": "alpha_sup", "c": c.tolist(), "omega": om.tolist()}
        else:
            deg = rng.integers(0, 6, size=(2, 3))
            cf = rng.uniform(0, 1, size=(2, 3))
            length = rng.uniform(0.05, 20.0)
            beta_fn = lambda a, b: _fact(a) * _fact(b) / _fact(a + b + 1)
            conv_terms = [(cf[0, i] * cf[1, j] * beta_fn(deg[0, i], deg[1, j]),
                           deg[0, i] + deg[1, j] + 1) for i in range(3) for j in range(3)]
            if kind == 1:
                n_l1 += 1
                lhs = sum(c * length ** (e + 1) / (e + 1) for c, e in conv_terms)
                rhs = np.prod([sum(cf[i, j] * length ** (deg[i, j] + 1) / (deg[i, j] + 1)
                                   for j in range(3)) for i in range(2)])
                info = {"part": "alpha_l1", "L": length}
            else:
                n_supl += 1
                lhs = sum(c * length**e for c, e in conv_terms)
                rhs = length * np.prod([sum(cf[i, j] * length ** deg[i, j] for j in range(3))
                                        for i in range(2)])
                info = {"part": "sup_L", "L": length}
            r = lhs / rhs
        if r > best:
            best, worst = float(r), info
    extra = {"m0": m0, "m0_within_3.77": m0 <= 3.77,
             "trials_by_part": {"alpha_sup": n_sup, "alpha_l1": n_l1, "sup_L": n_supl}}
    passed_m0 = m0 <= 3.77
    return best, worst, extra, passed_m0


def verify_inequality(lemma_id: str, trials: int = 1000, seed: int = 0, **options) -> LemmaReport:
    """Evaluate one inequality on ``trials`` random admissible inputs.

    Parameters
    ----------
    lemma_id : str
        One of :data:`LEMMAS`.
    trials : int
    seed : int
    **options
        ``lem0.1`` accepts ``grid``, ``mu`` and ``beta`` (defaults: 8-lattice,
        4, 0.3).

    Raises
    ------
    BorelNSError
        ``UNKNOWN_LEMMA`` for an unknown id.
    """
    if lemma_id not in LEMMAS:
        raise BorelNSError("UNKNOWN_LEMMA", f"unknown lemma {lemma_id!r}")
    if trials < 1:
        raise BorelNSError("CONFIG_INVALID", "trials must be positive")
    rng = np.random.default_rng(seed)
    extra: dict = {}
    ok_extra = True
    if lemma_id == "lem0.1":
        grid = options.get("grid") or WaveGrid(8)
        decay = DecayParams(options.get("mu", 4.0), options.get("beta", 0.3))
        best, worst, extra = _lem01(trials, rng, grid, decay)
    elif lemma_id == "lemBanach":
        best, worst, extra, ok_extra = _banach(trials, rng)
    else:
        best, worst = 0.0, {}
        for _ in range(trials):
            lhs, rhs, params = _draw(lemma_id, rng)
            r = lhs / rhs
            if lemma_id == "lema2":
                # identity: both directions must hold
                r = max(r, rhs / lhs) if lhs > 0 else r
            if r > best:
                best, worst = float(r), params
    passed = best <= 1 + PASS_TOL and ok_extra
    return LemmaReport(lemma_id, trials, float(best), bool(passed), worst, extra)


def _draw(lemma_id: str, rng):
    if lemma_id in ("lema2", "lema1.1", "lema1.2"):
        y = float(10 ** rng.uniform(-2, 1.5))
        a, b = sorted(rng.integers(0, 9, size=2))
        m, n = (int(a), int(b))
        if lemma_id == "lema2":
            m, n = int(rng.integers(0, 9)), int(rng.integers(0, 9))
            return (*_lema2_sides(m, n, y), {"m": m, "n": n, "y": y})
        fn = _lema11_sides if lemma_id == "lema1.1" else _lema12_sides
        return (*fn(m, n, y), {"m": m, "n": n, "y": y})
    if lemma_id == "lema0.0":
        m, n = (int(v) for v in rng.integers(-1, 7, size=2))
        q = float(10 ** rng.uniform(-2, 1.5))
        return (*_lema00_sides(m, n, q), {"m": m, "n": n, "q": q})
    beta = float(10 ** rng.uniform(-1, 0.5))
    k = float(10 ** rng.uniform(-2, 1.3))
    if lemma_id == "lema1.3":
        mu = float(rng.uniform(1, 6))
        m, n = (int(v) for v in rng.integers(0, 7, size=2))
        return (*_lema13_sides(mu, beta, k, m, n), {"mu": mu, "beta": beta, "k": k, "m": m, "n": n})
    if lemma_id == "lema1.3.0":
        mu = float(rng.uniform(2, 6))
        n = int(rng.integers(1, 9))
        return (*_lema130_sides(mu, beta, k, n), {"mu": mu, "beta": beta, "k": k, "n": n})
    if lemma_id == "lema1.4":
        mu = float(rng.uniform(1, 6))
        l1, l2 = (int(v) for v in rng.integers(0, 5, size=2))
        return (*_lema14_sides(mu, beta, k, l1, l2),
                {"mu": mu, "beta": beta, "k": k, "l1": l1, "l2": l2})
    mu = float(rng.uniform(3.05, 6))
    l = int(rng.integers(0, 9))
    return (*_lemaq2l_sides(mu, beta, k, l), {"mu": mu, "beta": beta, "k": k, "l": l})


def verify_all(trials: int = 1000, seed: int = 0) -> list[LemmaReport]:
    """Run every check with a shared seed."""
    return [verify_inequality(lid, trials, seed) for lid in LEMMAS]


def constant_checks(l_max: int = 200) -> dict:
    """Largest normalised sums behind the combinatorial constants ``C_*`` and ``C8``."""
    from .norms import C8, C_STAR, c8_ratios, c_star_ratios

    cs = c_star_ratios(l_max)
    c8 = c8_ratios(l_max)
    return {"c_star_max": float(cs.max()), "c_star_argmax_l": int(np.argmax(cs) + 3),
            "c_star_ok": bool(cs.max() <= C_STAR + 1e-5),
            "c8_max": float(c8.max()), "c8_ok": bool(c8.max() <= C8)}
