"""Stage orchestration and artifact emission.

A :class:`Pipeline` owns one configuration and an output directory.  Each
stage method computes its result (reusing earlier stages), writes its files
and returns a :class:`StageResult`.  :meth:`Pipeline.write_manifest` records
every emitted file with its SHA-256 checksum.  Nothing time-dependent is
written, so identical configurations give bit-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import borel
from .bessel import green_G, kernel_sup_scan
from .borel import BorelField, BorelGrid, compute_v1, picard_solve, weighted_norm
from .config import RunConfig, emit_config, validate_config
from .errors import BorelNSError
from .lemmas import LEMMAS, constant_checks, verify_inequality
from .norms import DecayParams, GevreyConstants, PaperConstants, norm_mu_beta
from .oracle import StepperConfig, evolve, mu2_norm_trace
from .snapshot import read_snapshot, shell_table, write_snapshot
from .spectral import SpectralField, WaveGrid, preset_field
from .summation import growth_rate, laplace_sum
from .taylor import gevrey_bound, gevrey_check, series_eval, taylor_coefficients, v_m_coefficients

STRUCTURE_TOL = 1e-12
GROWTH_WINDOW = 0.3
BASE_TOL = 1e-10
DUHAMEL_TOL = 1e-5
GEVREY_L = 10
VM_MAX = 11


@dataclass
class StageResult:
    """Outcome of one stage."""

    name: str
    passed: bool
    artifacts: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "artifacts": list(self.artifacts),
                "metrics": _jsonable(self.metrics), "tolerances": _jsonable(self.tolerances)}


def _jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj) -> str:
    """Stable-ordered JSON text."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                         for x in row])
    return buf.getvalue()


def rel_err(a: np.ndarray, ref: np.ndarray) -> float:
    """``max|a - ref| / max|ref|`` (absolute when ``ref`` vanishes)."""
    diff = float(np.max(np.abs(a - ref)))
    scale = float(np.max(np.abs(ref)))
    return diff / scale if scale > 0 else diff


class Pipeline:
    """Stage runner bound to one configuration and output directory."""

    def __init__(self, cfg: RunConfig, out_dir: str | None = None):
        validate_config(cfg)
        self.cfg = cfg
        self.out_dir = cfg.out if out_dir is None else out_dir
        self.results: list[StageResult] = []
        self._written: dict = {}
        borel.set_threads(cfg.threads)
        self._borel_input: str | None = None

    # problem data -------------------------------------------------------

    @cached_property
    def grid(self) -> WaveGrid:
        return WaveGrid(self.cfg.n, self.cfg.box_scale, self.cfg.dealias)

    @cached_property
    def decay(self) -> DecayParams:
        return DecayParams(self.cfg.mu, self.cfg.beta)

    @cached_property
    def v0(self) -> SpectralField:
        cfg = self.cfg
        if cfg.preset == "zero":
            return SpectralField.zeros(self.grid)
        if cfg.preset == "random_band":
            return preset_field("random_band", self.grid, target_norm=cfg.amplitude, mu=cfg.mu,
                                beta=cfg.beta, seed=cfg.seed)
        return preset_field(cfg.preset, self.grid, amplitude=cfg.amplitude)

    @cached_property
    def forcing(self) -> SpectralField:
        if self.cfg.forcing_amplitude == 0:
            return SpectralField.zeros(self.grid)
        return preset_field("taylor_green_like", self.grid, amplitude=self.cfg.forcing_amplitude)

    @cached_property
    def v1(self) -> SpectralField:
        return compute_v1(self.v0, self.forcing, nonlinear=self.cfg.nonlinear)

    @cached_property
    def constants(self) -> PaperConstants:
        return PaperConstants.build(self.decay, self.grid)

    @cached_property
    def certificate(self) -> GevreyConstants:
        n0 = norm_mu_beta(self.v0, self.decay)
        n1 = norm_mu_beta(self.v1, self.decay)
        return GevreyConstants.certify(n0, n1, self.decay, self.constants)

    @cached_property
    def p_grid(self) -> BorelGrid:
        cfg = self.cfg
        p_max = cfg.p_max if cfg.p_max_policy == "fixed" else cfg.p_max_factor / self.certificate.alpha
        return BorelGrid(p_max, cfg.n_nodes)

    @cached_property
    def solution(self):
        """``(U, diagnostics)``; diagnostics is ``None`` when loaded from a snapshot."""
        if self._borel_input is not None:
            return self._load_borel(self._borel_input), None
        alpha = None if self.cfg.nonlinear else 0.0
        return picard_solve(self.v0, self.forcing, self.decay, self.p_grid, tol=self.cfg.picard_tol,
                            max_iter=self.cfg.picard_max_iter, alpha=alpha,
                            consts=self.constants, nonlinear=self.cfg.nonlinear)

    @property
    def alpha(self) -> float:
        """Rate used for summation: the solver's rate, else the certified one."""
        diag = self.solution[1]
        if diag is not None and not self.cfg.nonlinear:
            return diag.alpha
        return self.certificate.alpha

    @cached_property
    def t_list(self) -> tuple:
        return self.cfg.t_list or (0.25 / self.certificate.alpha,)

    @cached_property
    def coefficients(self):
        return taylor_coefficients(self.v0, self.v1, self.cfg.l_max, nonlinear=self.cfg.nonlinear)

    def use_borel_snapshot(self, path: str) -> None:
        """Take ``U`` from a previously written snapshot instead of solving."""
        self._borel_input = path

    def _load_borel(self, path: str) -> BorelField:
        snap = read_snapshot(path)
        if snap.axis != "p" or snap.grid != self.grid:
            raise BorelNSError("GRID_MISMATCH", f"{path} is not a Borel snapshot on this grid")
        p_grid = BorelGrid(float(snap.coords[-1]), int(snap.coords.size))
        if not np.allclose(p_grid.nodes, snap.coords, rtol=1e-12, atol=0):
            raise BorelNSError("GRID_MISMATCH", "snapshot p-nodes are not a Borel grid")
        return BorelField(self.grid, p_grid, snap.values)

    # emission ------------------------------------------------------------

    def _write(self, name: str, data, stage: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        blob = data.encode() if isinstance(data, str) else data
        with open(os.path.join(self.out_dir, name), "wb") as fh:
            fh.write(blob)
        self._written[name] = {"stage": stage, "bytes": len(blob),
                               "sha256": hashlib.sha256(blob).hexdigest()}
        return name

    def _write_snapshot(self, name: str, values, stage: str, axis=None, coords=None) -> str:
        path = os.path.join(self.out_dir, name)
        os.makedirs(self.out_dir, exist_ok=True)
        write_snapshot(path, self.grid, values, axis, coords)
        with open(path, "rb") as fh:
            blob = fh.read()
        return self._write(name, blob, stage)

    def _run(self, name: str, fn) -> StageResult:
        try:
            result = fn()
        except BorelNSError as exc:
            ctx = {k: v for k, v in exc.context.items() if k != "stage"}
            raise BorelNSError(exc.code, f"stage {name}: {exc}", stage=name, **ctx) from exc
        self.results.append(result)
        return result

    # stages --------------------------------------------------------------

    def stage_certificate(self) -> StageResult:
        def body():
            c, g = self.constants, self.certificate
            checks = [{"name": k, "passed": bool(v)} for k, v in sorted(g.checks.items())]
            extra = constant_checks()
            checks += [{"name": "c_star", "passed": extra["c_star_ok"]},
                       {"name": "c8", "passed": extra["c8_ok"]},
                       {"name": "m0_below_3.77", "passed": c.m0 <= 3.77}]
            doc = {"mu": c.mu, "beta": c.beta, "norms": {"v0": g.norm_v0, "v1": g.norm_v1},
                   "c0": c.c0, "c2": c.c2, "alpha": g.alpha, "L": g.l_window, "a0": g.a0,
                   "b0": g.b0, "checks": checks, "constants": c.to_dict(),
                   "recentred": {"a": g.a_cap, "b": g.b_cap}, "combinatorics": extra}
            name = self._write("constants.json", dumps(doc), "certificate")
            shells = shell_table(self.v0)
            name2 = self._write("v0_shells.csv", csv_text(["k", "modes", "max_abs", "rms_abs"], shells),
                                "certificate")
            passed = all(ch["passed"] for ch in checks)
            return StageResult("certificate", passed, [name, name2],
                               {"alpha": g.alpha, "L": g.l_window, "a0": g.a0, "b0": g.b0})
        return self._run("certificate", body)

    def stage_borel(self) -> StageResult:
        def body():
            u, diag = self.solution
            norms = u.norms(self.decay)
            arts = [
                self._write_snapshot("borel_u.bnsf", u.values, "borel", "p", u.p_grid.nodes),
                self._write("borel_norms.csv",
                            csv_text(["p", "norm_mu_beta"], zip(u.p_grid.nodes, norms)), "borel"),
            ]
            base = rel_err(u.values[0], self.v1.values)
            metrics = {"base_error": base, "p_max": u.p_grid.p_max, "n_nodes": u.p_grid.n_nodes}
            passed = base <= BASE_TOL
            if diag is not None:
                doc = diag.to_dict()
                doc.update(self._rate_report(u, diag.alpha))
                metrics.update(doc)
                arts.append(self._write("borel_diagnostics.json", dumps(doc), "borel"))
                passed = (passed and diag.converged and diag.contraction_ratio < 1
                          and diag.max_divergence_defect <= STRUCTURE_TOL
                          and diag.max_hermitian_defect <= STRUCTURE_TOL)
            return StageResult("borel", passed, arts, metrics,
                               {"picard_tol": self.cfg.picard_tol, "structure": STRUCTURE_TOL,
                                "base": BASE_TOL})
        return self._run("borel", body)

    def _rate_report(self, u: BorelField, alpha: float) -> dict:
        """Fitted growth rate and the (1+p^2)-weighted norm at the certified rate.

        The weighted sup norm reuses ``alpha`` for the polynomial weight, so it
        is reported as approximate; the fit is data, not a pass criterion.
        """
        out = {"alpha_sup_norm": weighted_norm(u, "alpha_sup", alpha, self.decay),
               "alpha_sup_approximate": True}
        try:
            fit = growth_rate(u, GROWTH_WINDOW, self.decay)
        except BorelNSError:
            fit = None
        out["alpha_hat"] = None if fit is None else fit.alpha_hat
        out["alpha_hat_r2"] = None if fit is None else fit.r_squared
        out["alpha_gap"] = None if fit is None else alpha - fit.alpha_hat
        return out

    def stage_taylor(self) -> StageResult:
        def body():
            g = self.certificate
            if g.b0 is None:
                raise BorelNSError("BETA_ZERO", "Gevrey stage needs beta > 0")
            tc = self.coefficients
            rep = gevrey_check(tc, g.a0, g.b0, self.decay)
            rows = []
            for l in range(1, tc.l_max + 1):
                w = norm_mu_beta(tc.w(l), self.decay)
                bound = gevrey_bound(self.grid, l, g.a0, g.b0, self.decay)
                bnorm = float(np.max(np.where(self.grid.mask, bound, 0)
                                     * np.exp(self.decay.beta * self.grid.kmag)
                                     * (1 + self.grid.kmag) ** self.decay.mu))
                rows.append((l, w, bnorm, rep.ratios[l - 1]))
            arts = [self._write("taylor.csv", csv_text(["l", "norm_W", "gevrey_bound", "ratio"], rows),
                                "taylor")]
            l_check = min(GEVREY_L, tc.l_max)
            gevrey_ok = all(r <= 1 for r in rep.ratios[:l_check])
            vm = v_m_coefficients(tc, min(VM_MAX, tc.l_max + 1), g.a0, g.b0)
            vm_ok = all(c.passed for c in vm)
            u, _ = self.solution
            limit = 1 / (8 * g.b0)
            idx = np.flatnonzero(u.p_grid.nodes < limit)
            series_err = 0.0
            for i in idx:
                sv = series_eval(tc, float(u.p_grid.nodes[i]), g.b0)
                series_err = max(series_err, rel_err(sv.field.values, u.values[i]))
            passed = gevrey_ok and vm_ok and series_err < self.cfg.series_tol
            metrics = {"gevrey_ratios": rep.ratios, "l_pass": rep.l_pass,
                       "vm_ratio_max": max((c.sup / c.bound for c in vm if c.bound), default=0.0),
                       "series_points": int(idx.size), "series_error": series_err,
                       "series_limit_p": limit}
            return StageResult("taylor", passed, arts, metrics,
                               {"gevrey_l": l_check, "vm_m": len(vm), "series": self.cfg.series_tol})
        return self._run("taylor", body)

    @cached_property
    def summed(self) -> list:
        u, _ = self.solution
        n1 = norm_mu_beta(self.v1, self.decay)
        return [laplace_sum(u, self.v0, t, alpha=self.alpha, decay=self.decay, norm_v1=n1)
                for t in self.t_list]

    def stage_sum(self, physical: bool = False) -> StageResult:
        def body():
            rows, defects = [], []
            for res in self.summed:
                n2 = norm_mu_beta(res.field, self.decay, dmu=2.0)
                rows.append((float(res.t.real), res.norm_mu_beta, n2, res.tail_error))
                defects.append(max(res.field.divergence_defect(), res.field.hermitian_defect()))
            arts = [self._write("sum.csv", csv_text(["t", "norm_mu_beta", "norm_mu2_beta",
                                                     "tail_error"], rows), "sum"),
                    self._write_snapshot("sum_fields.bnsf",
                                         np.stack([r.field.values for r in self.summed]), "sum",
                                         "t", [float(r.t.real) for r in self.summed])]
            if physical:
                from .summation import physical_snapshot

                phys = np.stack([physical_snapshot(r.field) for r in self.summed])
                buf = io.BytesIO()
                np.save(buf, phys)
                arts.append(self._write("sum_physical.npy", buf.getvalue(), "sum"))
            worst = max(defects, default=0.0)
            passed = worst <= STRUCTURE_TOL and all(math.isfinite(r[3]) for r in rows)
            return StageResult("sum", passed, arts,
                               {"t_list": list(self.t_list), "structure_defect": worst,
                                "alpha": self.alpha},
                               {"structure": STRUCTURE_TOL})
        return self._run("sum", body)

    def stage_oracle(self, scheme: str | None = None) -> StageResult:
        def body():
            cfg = self.cfg
            rows, finals, traces = [], [], []
            ok = True
            for res in self.summed:
                t = float(res.t.real)
                rk = evolve(self.v0, self.forcing,
                            StepperConfig(dt=t / cfg.oracle_steps, t_end=t, nonlinear=cfg.nonlinear))
                dp = evolve(self.v0, self.forcing,
                            StepperConfig(dt=t, t_end=t, scheme="duhamel_picard",
                                          nonlinear=cfg.nonlinear))
                ref = rk.final().values
                e_borel = rel_err(res.field.values, ref)
                e_schemes = rel_err(dp.final().values, ref)
                rows.append((t, e_borel, e_schemes))
                finals.append(ref)
                traces.extend(mu2_norm_trace(rk, self.decay).tolist())
                ok = ok and e_borel < cfg.oracle_tol and e_schemes < DUHAMEL_TOL
            arts = [self._write("oracle_compare.csv",
                                csv_text(["t", "rel_err_borel_rk4", "rel_err_duhamel_rk4"], rows),
                                "oracle"),
                    self._write_snapshot("oracle.bnsf", np.stack(finals), "oracle", "t",
                                         [r[0] for r in rows]),
                    self._write("oracle_mu2.csv", csv_text(["t", "norm_mu2_beta"], traces),
                                "oracle")]
            return StageResult("oracle", ok, arts,
                               {"rel_err_borel": [r[1] for r in rows],
                                "rel_err_schemes": [r[2] for r in rows]},
                               {"borel_vs_rk4": cfg.oracle_tol, "duhamel_vs_rk4": DUHAMEL_TOL})
        return self._run("oracle", body)

    def stage_lemmas(self, lemma_ids=None, trials: int | None = None) -> StageResult:
        def body():
            ids = LEMMAS if not lemma_ids else tuple(lemma_ids)
            n = self.cfg.lemma_trials if trials is None else trials
            reports = [verify_inequality(lid, n, self.cfg.seed) for lid in ids]
            doc = {"seed": self.cfg.seed, "trials": n, "reports": [r.to_dict() for r in reports]}
            arts = [self._write("lemmas.json", dumps(doc), "lemmas")]
            return StageResult("lemmas", all(r.passed for r in reports), arts,
                               {r.lemma_id: r.max_ratio for r in reports},
                               {"max_ratio": 1 + 1e-9})
        return self._run("lemmas", body)

    def stage_kernel_scan(self, z_max: float = 200.0, n_samples: int = 100_000,
                          n_grid: int = 101) -> StageResult:
        def body():
            sup = kernel_sup_scan(z_max, n_samples)
            zs = np.linspace(0.0, z_max, n_grid)
            rows = []
            for z in zs:
                zp = zs[zs <= z]
                rows.extend(zip(np.full(zp.size, z), zp, green_G(np.full(zp.size, z), zp)))
            arts = [self._write("kernel.csv", csv_text(["z", "z_prime", "G"], rows), "kernel-scan")]
            return StageResult("kernel-scan", 0.55 <= sup <= 0.70, arts, {"sup_G": sup},
                               {"interval": [0.55, 0.70]})
        return self._run("kernel-scan", body)

    # driver --------------------------------------------------------------

    def run_all(self) -> dict:
        """Certificate, Borel solve, Taylor (when ``beta > 0``), summation, oracle, lemmas."""
        self.stage_certificate()
        self.stage_borel()
        if self.cfg.beta > 0:
            self.stage_taylor()
        self.stage_sum()
        self.stage_oracle()
        if self.cfg.run_lemmas:
            self.stage_lemmas()
        return self.write_manifest()

    def write_manifest(self) -> dict:
        """Write ``manifest.json`` and return its content."""
        self._write("config.txt", emit_config(self.cfg), "config")
        manifest = {
            "config": {k: getattr(self.cfg, k) for k in self.cfg.__dataclass_fields__},
            "stages": [r.to_dict() for r in self.results],
            "artifacts": dict(sorted(self._written.items())),
            "passed": all(r.passed for r in self.results),
        }
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(dumps(manifest))
        return _jsonable(manifest)


def run_pipeline(cfg: RunConfig, out_dir: str | None = None) -> dict:
    """Execute every stage in order and return the manifest.

    Raises
    ------
    BorelNSError
        ``CONFIG_INVALID`` before any computation, or a stage error whose
        message and context name the stage.
    """
    return Pipeline(cfg, out_dir).run_all()
