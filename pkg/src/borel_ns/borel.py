"""Borel-plane integral equation and its Picard solver.

The unknown ``U(k, p)`` solves ``U = N[U]`` with

    N[U] = Dinv( -P_k[ i k_j T_ji ] ) + 2 v1 J1(z)/z,   z = 2|k| sqrt(p),
    T_ji = v0_j * U_i + U_j * v0_i + U_j (*) U_i,

where ``*`` is the dealiased lattice convolution, ``(*)`` adds the Laplace
convolution in ``p`` and ``Dinv`` is the Duhamel inversion.  All products
are formed in physical space, where the Fourier convolution is pointwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import sparse

from . import bessel
from .errors import BorelNSError, NoConvergence, require
from .norms import DecayParams, PaperConstants, alpha_min, norm_mu_beta, weighted_sup
from .spectral import (SpectralField, WaveGrid, hermitian_defect, nonlinear_values,
                       project_values, to_physical, to_spectral)

GREGORY_ORDER = 8
INTERP_POINTS = 8
GAUSS_POINTS = 16

_THREADS = 1


def set_threads(n: int) -> None:
    """Number of worker threads used for the per-shell Duhamel products."""
    global _THREADS
    _THREADS = max(int(n), 1)


def gregory_weights(n_nodes: int, h: float, order: int = GREGORY_ORDER) -> np.ndarray:
    """Trapezoid weights with endpoint corrections exact for degree ``< order``.

    The left-end corrections ``d_j`` solve ``sum_j d_j j^q = c_q`` where
    ``c_q`` is the Euler-Maclaurin endpoint term of ``x^q``; the right end
    mirrors them.
    """
    require(n_nodes >= 2 * order, "CONFIG_INVALID", f"need at least {2 * order} nodes")
    from scipy.special import bernoulli

    b = bernoulli(order + 1)
    rhs = np.array([b[q + 1] / (q + 1) if q % 2 == 1 else 0.0 for q in range(order)])
    j = np.arange(order, dtype=float)
    vander = j[None, :] ** np.arange(order)[:, None]
    d = np.linalg.solve(vander, rhs)
    w = np.ones(n_nodes)
    w[0] = w[-1] = 0.5
    w[:order] += d
    w[-order:] += d[::-1]
    return w * h


@dataclass(frozen=True)
class BorelGrid:
    """Nodes uniform in ``s = sqrt(p)`` on ``[0, p_max]``."""

    p_max: float
    n_nodes: int = 256

    def __post_init__(self):
        require(self.p_max > 0 and math.isfinite(self.p_max), "CONFIG_INVALID",
                "p_max must be positive and finite")
        require(self.n_nodes >= 16, "CONFIG_INVALID", "n_nodes must be at least 16")

    @property
    def s_max(self) -> float:
        return math.sqrt(self.p_max)

    @cached_property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, self.s_max, self.n_nodes)

    @property
    def h(self) -> float:
        return self.s_max / (self.n_nodes - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.s**2

    @cached_property
    def weights(self) -> np.ndarray:
        """Weights for ``int_0^{p_max} g(p) dp`` (``dp = 2 s ds``)."""
        return 2 * self.s * gregory_weights(self.n_nodes, self.h)

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Lower-order companion rule used for quadrature error estimates."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return 2 * self.s * w

    def interpolation_matrix(self, s_targets: np.ndarray) -> sparse.csr_matrix:
        """Local Lagrange interpolation in ``s`` using the even extension about 0."""
        t = np.asarray(s_targets, dtype=float) / self.h
        m = INTERP_POINTS
        start = np.floor(t).astype(int) - (m // 2 - 1)
        start = np.minimum(start, self.n_nodes - m)
        offs = np.arange(m)
        idx = start[:, None] + offs[None, :]
        x = idx.astype(float)
        w = np.ones((t.size, m))
        for a in range(m):
            for b in range(m):
                if a != b:
                    w[:, a] *= (t - x[:, b]) / (x[:, a] - x[:, b])
        rows = np.repeat(np.arange(t.size), m)
        mat = sparse.coo_matrix((w.ravel(), (rows, np.abs(idx).ravel())),
                                shape=(t.size, self.n_nodes))
        return mat.tocsr()

    @cached_property
    def convolution_rule(self) -> tuple[np.ndarray, np.ndarray, sparse.csr_matrix]:
        """Gauss nodes ``u``, weights and the matrix sampling ``f(p_i u_q)``.

        Row ``i * Q + q`` of the matrix interpolates at ``p = p_i u_q``.  The
        nodes are symmetric, so ``f(p_i (1 - u_q))`` is row ``i * Q + Q-1-q``.
        """
        u, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
        u = 0.5 * (u + 1)
        w = 0.5 * w
        targets = (self.s[:, None] * np.sqrt(u)[None, :]).ravel()
        return u, w, self.interpolation_matrix(targets)


@dataclass
class BorelField:
    """``U(k, p)`` sampled on a wave grid times a Borel grid.

    ``values`` has shape ``(n_nodes, 3, N, N, N)``.
    """

    grid: WaveGrid
    p_grid: BorelGrid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        shape = (self.p_grid.n_nodes, 3, n, n, n)
        arr = np.asarray(self.values, dtype=complex)
        require(arr.shape == shape, "GRID_MISMATCH", f"values {arr.shape} vs expected {shape}")
        require(bool(np.all(np.isfinite(arr))), "NAN_DETECTED", "Borel field is not finite")
        self.values = arr

    @classmethod
    def zeros(cls, grid: WaveGrid, p_grid: BorelGrid) -> "BorelField":
        n = grid.n
        return cls(grid, p_grid, np.zeros((p_grid.n_nodes, 3, n, n, n), dtype=complex))

    def at(self, index: int) -> SpectralField:
        """Slice at p-node ``index`` as a :class:`SpectralField`."""
        return SpectralField(self.grid, self.values[index])

    def norms(self, decay: DecayParams, dmu: float = 0.0) -> np.ndarray:
        """``||U(., p_i)||_{mu, beta}`` for every node."""
        return weighted_sup(self.values, self.grid, decay, dmu)

    def __sub__(self, other: "BorelField") -> "BorelField":
        _check_pair(self, other)
        return BorelField(self.grid, self.p_grid, self.values - other.values)


def _check_pair(a, b) -> None:
    if a.grid != b.grid:
        raise BorelNSError("GRID_MISMATCH", "wave grids differ")
    if getattr(a, "p_grid", None) is not None and getattr(b, "p_grid", None) is not None:
        if a.p_grid != b.p_grid:
            raise BorelNSError("GRID_MISMATCH", "Borel grids differ")


def compute_v1(v0: SpectralField, f: SpectralField, nonlinear: bool = True) -> SpectralField:
    """``v1 = -|k|^2 v0 - i k_j P[v0_j * v0] + f``."""
    _check_pair(v0, f)
    require(v0.divergence_free and f.divergence_free, "NOT_DIV_FREE",
            "compute_v1 needs divergence-free inputs")
    grid = v0.grid
    out = -grid.k2 * v0.values + f.values
    if nonlinear:
        out = out + nonlinear_values(v0.values, grid)
    return SpectralField(grid, out)


def linear_part(v1: SpectralField, p_grid: BorelGrid) -> np.ndarray:
    """``2 v1 J1(z)/z`` on every p-node."""
    z = 2 * v1.grid.kmag[None] * p_grid.s[:, None, None, None]
    return 2 * bessel.j1_over_z(z)[:, None] * v1.values[None]


def _is_real(*arrays) -> bool:
    return all(hermitian_defect(a) < 1e-10 for a in arrays)


def _physical(values: np.ndarray, grid: WaveGrid, real: bool) -> np.ndarray:
    phys = to_physical(np.where(grid.mask, values, 0))
    return phys.real if real else phys


def _laplace_products(a_phys: np.ndarray, b_phys: np.ndarray | None, p_grid: BorelGrid,
                      pairs, chunk: int = 32) -> np.ndarray:
    """Laplace convolutions ``a_j (*) b_i`` in physical space for each pair ``(j, i)``.

    ``a_phys`` and ``b_phys`` have shape ``(n_p, 3, N, N, N)``; ``b_phys`` of
    ``None`` reuses ``a_phys``.  Returns shape ``(n_p, len(pairs), N, N, N)``.
    """
    u, w, mat = p_grid.convolution_rule
    q = u.size
    n_p = p_grid.n_nodes
    lat = a_phys.shape[2:]
    out = np.empty((n_p, len(pairs)) + lat, dtype=a_phys.dtype)
    flat_a = a_phys.reshape(n_p, -1)
    flat_b = None if b_phys is None else b_phys.reshape(n_p, -1)
    for lo in range(0, n_p, chunk):
        hi = min(lo + chunk, n_p)
        rows = mat[lo * q:hi * q]
        sa = (rows @ flat_a).reshape((hi - lo, q, 3) + lat)
        sb = sa if flat_b is None else (rows @ flat_b).reshape((hi - lo, q, 3) + lat)
        # a at p(1-u_q) is the mirrored Gauss node
        sa_rev = sa[:, ::-1]
        for c, (j, i) in enumerate(pairs):
            acc = np.einsum("q,nq...->n...", w, sa_rev[:, :, j] * sb[:, :, i])
            out[lo:hi, c] = acc * p_grid.nodes[lo:hi, None, None, None]
    return out


def laplace_convolve(a: BorelField, b: BorelField) -> BorelField:
    """Componentwise ``(a (*) b)(k, p) = sum_{k'} int_0^p a(k', p - s) b(k - k', s) ds``."""
    _check_pair(a, b)
    grid = a.grid
    real = _is_real(a.values, b.values)
    ap = _physical(a.values, grid, real)
    bp = _physical(b.values, grid, real)
    prod = _laplace_products(ap, bp, a.p_grid, [(0, 0), (1, 1), (2, 2)])
    spec = np.where(grid.mask, to_spectral(prod), 0)
    return BorelField(grid, a.p_grid, spec)


_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _stress(u_values: np.ndarray, v0: SpectralField, p_grid: BorelGrid,
            nonlinear: bool = True) -> np.ndarray:
    """Symmetric tensor ``T_ji`` in Fourier space, shape ``(n_p, 3, 3, N, N, N)``."""
    grid = v0.grid
    real = _is_real(u_values, v0.values)
    up = _physical(u_values, grid, real)
    vp = _physical(v0.values, grid, real)
    conv = _laplace_products(up, None, p_grid, _PAIRS) if nonlinear else None
    n_p = p_grid.n_nodes
    t = np.empty((n_p, 3, 3) + up.shape[2:], dtype=complex)
    for c, (j, i) in enumerate(_PAIRS):
        comp = vp[j] * up[:, i] + up[:, j] * vp[i]
        if conv is not None:
            comp = comp + conv[:, c]
        spec = np.where(grid.mask, to_spectral(comp), 0)
        t[:, j, i] = spec
        t[:, i, j] = spec
    return t


def g_oper(u: BorelField, v0: SpectralField) -> list[BorelField]:
    """``G^[j] = -P[v0_j * U + U_j * v0 + U_j (*) U]`` for ``j = 0, 1, 2``."""
    _check_pair(u, v0)
    t = _stress(u.values, v0, u.p_grid)
    return [BorelField(u.grid, u.p_grid, -project_values(t[:, j], u.grid)) for j in range(3)]


@lru_cache(maxsize=32)
def _shell_operators(grid: WaveGrid, p_grid: BorelGrid):
    shells, inverse = grid.shells
    members = [np.flatnonzero(inverse == s) for s in range(shells.size)]
    mats = [bessel.duhamel_matrix(float(k), p_grid) for k in shells]
    return members, mats


def invert_field(rhs: np.ndarray, grid: WaveGrid, p_grid: BorelGrid) -> np.ndarray:
    """Apply the Duhamel inversion node by node to ``rhs`` of shape ``(n_p, 3, N, N, N)``."""
    members, mats = _shell_operators(grid, p_grid)
    n_p = p_grid.n_nodes
    flat = rhs.reshape(n_p, 3, -1)
    out = np.zeros_like(flat)

    def work(s):
        idx = members[s]
        block = flat[:, :, idx].reshape(n_p, -1)
        out[:, :, idx] = (mats[s] @ block).reshape(n_p, 3, idx.size)

    if _THREADS > 1:
        with ThreadPoolExecutor(_THREADS) as pool:
            list(pool.map(work, range(len(members))))
    else:
        for s in range(len(members)):
            work(s)
    return out.reshape(rhs.shape)


def apply_N(u: BorelField, v0: SpectralField, v1: SpectralField,
            nonlinear: bool = True) -> BorelField:
    """One application of the integral operator.

    With ``nonlinear=False`` the coupling term is dropped entirely and the
    result is the inhomogeneous part ``2 v1 J1(z)/z``.
    """
    _check_pair(u, v0)
    _check_pair(v0, v1)
    lin = linear_part(v1, u.p_grid)
    if not nonlinear:
        return BorelField(u.grid, u.p_grid, lin)
    grid = u.grid
    t = _stress(u.values, v0, u.p_grid)
    div = np.einsum("jxyz,njixyz->nixyz", grid.k, t)
    rhs = -project_values(1j * div, grid)
    return BorelField(grid, u.p_grid, invert_field(rhs, grid, u.p_grid) + lin)


KINDS = ("alpha_sup", "alpha_l1", "sup_L")


def weighted_norm(u: BorelField, kind: str, param: float, decay: DecayParams) -> float:
    """Norms on Borel fields.

    ``alpha_sup``: ``sup_p (1+p^2) e^{-alpha p} ||U||``; ``alpha_l1``:
    ``int e^{-alpha p} ||U|| dp``; ``sup_L``: ``sup_{p <= L} ||U||``.
    """
    if kind not in KINDS:
        raise BorelNSError("BAD_KIND", f"unknown norm kind {kind!r}")
    per_p = u.norms(decay)
    p = u.p_grid.nodes
    if kind == "alpha_sup":
        return float(np.max((1 + p**2) * np.exp(-param * p) * per_p))
    if kind == "alpha_l1":
        return float(np.dot(u.p_grid.weights, np.exp(-param * p) * per_p))
    sel = p <= param * (1 + 1e-12)
    return float(np.max(per_p[sel])) if np.any(sel) else 0.0


@dataclass
class PicardDiagnostics:
    """Convergence record of a Picard solve."""

    iterate_gaps: list = field(default_factory=list)
    contraction_ratio: float = 0.0
    iterations: int = 0
    converged: bool = False
    alpha: float = 1.0
    tolerance: float = 0.0
    residual: float = 0.0
    gap_fit_r2: float = 1.0
    gap_fit_points: int = 0
    max_divergence_defect: float = 0.0
    max_hermitian_defect: float = 0.0
    solution_norm: float = 0.0
    ball_radius: float = 0.0
    norm_v1: float = 0.0

    def to_dict(self) -> dict:
        return {k: (list(map(float, v)) if isinstance(v, list) else v)
                for k, v in self.__dict__.items()}


def log_linear_r2(values) -> tuple[float, int]:
    """``r^2`` of a least-squares line through ``log(values)``.

    Two or fewer points fit exactly, reported as ``1.0``.
    """
    vals = np.asarray([v for v in values if v > 0], dtype=float)
    if vals.size <= 2:
        return 1.0, int(vals.size)
    x = np.arange(vals.size, dtype=float)
    y = np.log(vals)
    coef = np.polyfit(x, y, 1)
    res = y - np.polyval(coef, x)
    tot = np.sum((y - y.mean()) ** 2)
    if tot == 0:
        return 1.0, int(vals.size)
    return float(1 - np.sum(res**2) / tot), int(vals.size)


def _field_defects(values: np.ndarray, grid: WaveGrid) -> tuple[float, float]:
    scale = np.max(np.abs(values))
    if scale == 0:
        return 0.0, 0.0
    div = np.abs(np.sum(grid.k[None] * values, axis=1))
    kscale = max(float(np.max(grid.kmag)), 1.0)
    return float(np.max(div) / (scale * kscale)), hermitian_defect(values)


def picard_solve(v0: SpectralField, f: SpectralField, decay: DecayParams,
                 p_grid: BorelGrid | None = None, *, tol: float = 1e-12, max_iter: int = 60,
                 alpha: float | None = None, consts: PaperConstants | None = None,
                 nonlinear: bool = True) -> tuple[BorelField, PicardDiagnostics]:
    """Solve ``U = N[U]`` by successive substitution.

    Parameters
    ----------
    v0, f : SpectralField
        Initial velocity and time-independent forcing.
    decay : DecayParams
    p_grid : BorelGrid, optional
        Defaults to ``BorelGrid(4 / alpha, 256)``; required in linear mode.
    tol : float
        Stopping threshold on the gap in the ``alpha_l1`` norm, relative to
        the norm of the first iterate ``2 v1 J1(z)/z``.
    alpha : float, optional
        Exponential weight; defaults to the certified minimal rate.  Linear
        mode uses 0 because every mode is bounded in ``p``.
    nonlinear : bool
        ``False`` drops the coupling term (heat equation).

    Raises
    ------
    NoConvergence
        If ``max_iter`` sweeps do not bring the gap below the threshold.
    """
    _check_pair(v0, f)
    grid = v0.grid
    v1 = compute_v1(v0, f, nonlinear=nonlinear)
    n1 = norm_mu_beta(v1, decay)
    if alpha is None:
        if nonlinear:
            consts = consts or PaperConstants.build(decay, grid)
            alpha = alpha_min(norm_mu_beta(v0, decay), n1, consts)
        else:
            alpha = 0.0
    if p_grid is None:
        require(alpha > 0, "CONFIG_INVALID", "linear mode needs an explicit Borel grid")
        p_grid = BorelGrid(4.0 / alpha, 256)
    u = BorelField(grid, p_grid, linear_part(v1, p_grid))
    scale = weighted_norm(u, "alpha_l1", alpha, decay)
    threshold = tol * scale
    diag = PicardDiagnostics(alpha=alpha, tolerance=threshold, norm_v1=n1,
                             ball_radius=2 * n1 / alpha if alpha > 0 else math.inf)
    for it in range(1, max_iter + 1):
        new = apply_N(u, v0, v1, nonlinear=nonlinear)
        gap = weighted_norm(new - u, "alpha_l1", alpha, decay)
        diag.iterate_gaps.append(gap)
        dd, hd = _field_defects(new.values, grid)
        diag.max_divergence_defect = max(diag.max_divergence_defect, dd)
        diag.max_hermitian_defect = max(diag.max_hermitian_defect, hd)
        u = new
        diag.iterations = it
        if gap <= threshold:
            diag.converged = True
            break
    gaps = diag.iterate_gaps
    ratios = [gaps[i + 1] / gaps[i] for i in range(1, len(gaps) - 1) if gaps[i] > 0]
    if not ratios and len(gaps) >= 2 and gaps[0] > 0:
        ratios = [gaps[1] / gaps[0]]
    diag.contraction_ratio = float(max(ratios)) if ratios else 0.0
    diag.gap_fit_r2, diag.gap_fit_points = log_linear_r2(gaps)
    diag.solution_norm = weighted_norm(u, "alpha_l1", alpha, decay)
    diag.residual = weighted_norm(apply_N(u, v0, v1, nonlinear=nonlinear) - u,
                                  "alpha_l1", alpha, decay)
    if not diag.converged:
        raise NoConvergence(f"gap {gaps[-1]:.3e} above {threshold:.3e} after {max_iter} sweeps",
                            diagnostics=diag)
    return u, diag
