"""Classical Fourier-space time stepping used as an independent reference.

Two schemes integrate ``v_t = -|k|^2 v - i k_j P[v_j * v] + f``:

``if_rk4``
    Integrating-factor (Lawson) fourth-order Runge-Kutta.
``duhamel_picard``
    Fixed point of the variation-of-constants formula on short windows,
    collocated at Chebyshev-Lobatto nodes; windows halve when the
    iteration does not contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import BorelNSError, NoConvergence, require
from .norms import DecayParams, norm_mu_beta
from .spectral import SpectralField, WaveGrid, nonlinear_values

SCHEMES = ("if_rk4", "duhamel_picard")


@dataclass
class StepperConfig:
    """Settings for :func:`evolve`.

    ``window`` is the initial Duhamel window length (defaults to the whole
    interval); ``nodes`` is the number of collocation intervals per window.
    """

    dt: float
    t_end: float
    scheme: str = "if_rk4"
    save_every: int = 1
    nonlinear: bool = True
    window: float | None = None
    nodes: int = 10
    picard_tol: float = 1e-14
    max_iter: int = 40
    min_window: float = 1e-8

    def __post_init__(self):
        require(self.dt > 0, "CONFIG_INVALID", "dt must be positive")
        require(self.t_end > 0, "CONFIG_INVALID", "t_end must be positive")
        if self.scheme not in SCHEMES:
            raise BorelNSError("CONFIG_INVALID", f"unknown scheme {self.scheme!r}")


@dataclass
class Trajectory:
    """Saved states of a time integration."""

    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    def __len__(self) -> int:
        return len(self.times)

    def final(self) -> SpectralField:
        return self.fields[-1]


def _rhs(values: np.ndarray, f: np.ndarray, grid: WaveGrid, nonlinear: bool) -> np.ndarray:
    out = f.copy()
    if nonlinear:
        out = out + nonlinear_values(values, grid)
    return out


def _rk4_values(v: np.ndarray, f: np.ndarray, grid: WaveGrid, dt: float,
                nonlinear: bool) -> np.ndarray:
    e = np.exp(-grid.k2 * dt)
    e2 = np.exp(-grid.k2 * dt / 2)
    k1 = dt * _rhs(v, f, grid, nonlinear)
    k2 = dt * _rhs(e2 * (v + k1 / 2), f, grid, nonlinear)
    k3 = dt * _rhs(e2 * v + k2 / 2, f, grid, nonlinear)
    k4 = dt * _rhs(e * v + e2 * k3, f, grid, nonlinear)
    return e * v + (e * k1 + 2 * e2 * (k2 + k3) + k4) / 6


def step_ifrk4(v: SpectralField, f: SpectralField, dt: float, nonlinear: bool = True) -> SpectralField:
    """One integrating-factor RK4 step."""
    if v.grid != f.grid:
        raise BorelNSError("GRID_MISMATCH", "v and f live on different grids")
    return SpectralField(v.grid, _rk4_values(v.values, f.values, v.grid, dt, nonlinear))


def _check_finite(values: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(values)):
        raise BorelNSError("NAN_DETECTED", f"non-finite state at t={t}")


def _evolve_rk4(v0: SpectralField, f: SpectralField, cfg: StepperConfig) -> Trajectory:
    n_steps = max(int(math.ceil(cfg.t_end / cfg.dt - 1e-12)), 1)
    dt = cfg.t_end / n_steps
    traj = Trajectory([0.0], [v0.copy()], {"scheme": "if_rk4", "dt": dt, "steps": n_steps})
    v = v0.values.copy()
    for i in range(1, n_steps + 1):
        v = _rk4_values(v, f.values, v0.grid, dt, cfg.nonlinear)
        _check_finite(v, i * dt)
        if i % cfg.save_every == 0 or i == n_steps:
            traj.times.append(i * dt if i < n_steps else cfg.t_end)
            traj.fields.append(SpectralField(v0.grid, v.copy()))
    return traj


def lobatto_nodes(n: int, length: float) -> np.ndarray:
    """Chebyshev-Lobatto points on ``[0, length]`` in increasing order."""
    return 0.5 * length * (1 - np.cos(np.pi * np.arange(n + 1) / n))


def _lagrange_basis(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values ``l_j(x_g)``, shape ``(len(x), len(nodes))``."""
    out = np.ones((x.size, nodes.size))
    for j in range(nodes.size):
        for m in range(nodes.size):
            if m != j:
                out[:, j] *= (x - nodes[m]) / (nodes[j] - nodes[m])
    return out


@lru_cache(maxsize=64)
def _window_weights(lams: tuple, length: float, n: int) -> np.ndarray:
    """``W[lam, m, j] = int_0^{tau_m} e^{-lam (tau_m - s)} l_j(s) ds``."""
    tau = lobatto_nodes(n, length)
    gx, gw = np.polynomial.legendre.leggauss(32)
    lam = np.asarray(lams)
    out = np.zeros((lam.size, n + 1, n + 1))
    for m in range(1, n + 1):
        s = 0.5 * tau[m] * (gx + 1)
        w = 0.5 * tau[m] * gw
        basis = _lagrange_basis(tau, s)
        decay = np.exp(-lam[:, None] * (tau[m] - s)[None, :])
        out[:, m, :] = (decay * w[None, :]) @ basis
    return out


def _duhamel_window(v: np.ndarray, f: np.ndarray, grid: WaveGrid, length: float,
                    cfg: StepperConfig) -> tuple[np.ndarray, float, int]:
    """Solve one window; returns the end state, the worst gap ratio and sweeps used."""
    k2 = grid.k2
    lams, inverse = np.unique(np.round(k2.ravel(), 12), return_inverse=True)
    weights = _window_weights(tuple(lams), length, cfg.nodes)
    tau = lobatto_nodes(cfg.nodes, length)
    free = np.exp(-k2[None] * tau[:, None, None, None])[:, None] * v[None]
    states = np.broadcast_to(v, (cfg.nodes + 1,) + v.shape).copy()
    flat_w = weights[inverse]  # (n_lattice, m, j)
    prev_gap = None
    ratio = 0.0
    scale = max(float(np.max(np.abs(free))), 1e-300)
    for sweep in range(1, cfg.max_iter + 1):
        forcing = np.stack([_rhs(s, f, grid, cfg.nonlinear) for s in states])
        flat_f = forcing.reshape(cfg.nodes + 1, 3, -1)
        conv = np.einsum("lmj,jcl->mcl", flat_w, flat_f).reshape(states.shape)
        new = free + conv
        gap = float(np.max(np.abs(new - states)))
        states = new
        if prev_gap:
            ratio = max(ratio, gap / prev_gap)
        if gap <= cfg.picard_tol * scale:
            return states[-1], ratio, sweep
        if prev_gap is not None and gap > prev_gap:
            break
        prev_gap = gap
    raise NoConvergence(f"window {length:.3e} did not contract")


def _evolve_duhamel(v0: SpectralField, f: SpectralField, cfg: StepperConfig) -> Trajectory:
    length = cfg.t_end if cfg.window is None else min(cfg.window, cfg.t_end)
    while True:
        n_win = max(int(math.ceil(cfg.t_end / length - 1e-12)), 1)
        length = cfg.t_end / n_win
        traj = Trajectory([0.0], [v0.copy()], {"scheme": "duhamel_picard"})
        v = v0.values.copy()
        worst = 0.0
        sweeps = 0
        try:
            for w in range(1, n_win + 1):
                v, ratio, used = _duhamel_window(v, f.values, v0.grid, length, cfg)
                _check_finite(v, w * length)
                worst = max(worst, ratio)
                sweeps += used
                traj.times.append(w * length if w < n_win else cfg.t_end)
                traj.fields.append(SpectralField(v0.grid, v.copy()))
        except NoConvergence:
            length /= 2
            if length < cfg.min_window:
                raise
            continue
        traj.info.update({"window": length, "windows": n_win, "sweeps": sweeps,
                          "contraction_ratio": worst,
                          "c1_empirical": worst / math.sqrt(length)})
        return traj


def evolve(v0: SpectralField, f: SpectralField, cfg: StepperConfig) -> Trajectory:
    """Integrate from ``t = 0`` to ``cfg.t_end`` with the configured scheme."""
    if v0.grid != f.grid:
        raise BorelNSError("GRID_MISMATCH", "v0 and f live on different grids")
    if cfg.scheme == "if_rk4":
        return _evolve_rk4(v0, f, cfg)
    return _evolve_duhamel(v0, f, cfg)


def mu2_norm_trace(trajectory: Trajectory, decay: DecayParams) -> np.ndarray:
    """Rows ``(t, ||v(., t)||_{mu+2, beta})`` along a trajectory."""
    return np.array([[t, norm_mu_beta(v, decay, dmu=2.0)] for t, v in trajectory])


def spectral_energy(v: SpectralField) -> float:
    """``sum_k |v(k)|^2``."""
    return float(np.sum(np.abs(v.values) ** 2))
