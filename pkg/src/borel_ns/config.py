"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment and blank lines are
ignored.  Unspecified keys take their defaults, so an empty file is a valid
configuration.  ``emit_config`` writes every key with ``repr`` floats, so
``parse_config(emit_config(cfg)) == cfg``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import BorelNSError
from .spectral import PRESETS

CONFIG_PRESETS = PRESETS + ("zero",)
P_MAX_POLICIES = ("inverse_alpha", "fixed")


@dataclass(frozen=True)
class RunConfig:
    """Every setting consumed by the pipeline and the CLI."""

    n: int = 8
    box_scale: float = 1.0
    dealias: float = 2 / 3
    mu: float = 4.0
    beta: float = 1.0
    preset: str = "taylor_green_like"
    amplitude: float = 1e-6
    forcing_amplitude: float = 0.0
    nonlinear: bool = True
    seed: int = 0
    n_nodes: int = 256
    p_max_policy: str = "inverse_alpha"
    p_max_factor: float = 4.0
    p_max: float = 40.0
    picard_tol: float = 1e-30
    picard_max_iter: int = 60
    l_max: int = 16
    t_list: tuple = ()
    oracle_steps: int = 200
    oracle_tol: float = 1e-4
    series_tol: float = 1e-5
    lemma_trials: int = 1000
    run_lemmas: bool = True
    out: str = "out"
    threads: int = 1

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name: str, text: str):
    kind = _FIELDS[name].type
    if kind == "bool":
        return _parse_bool(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "tuple":
        return tuple(float(x) for x in text.split(",") if x.strip())
    return text


def parse_config(text: str) -> RunConfig:
    """Parse configuration text and validate it.

    Raises
    ------
    BorelNSError
        ``PARSE_ERROR`` (with ``line``) for malformed lines, unknown or
        repeated keys and unconvertible values; ``CONFIG_INVALID`` when the
        values violate an invariant.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BorelNSError("PARSE_ERROR", f"line {lineno}: expected 'key = value'", line=lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _FIELDS:
            raise BorelNSError("PARSE_ERROR", f"line {lineno}: unknown key {key!r}",
                               line=lineno, key=key)
        if key in values:
            raise BorelNSError("PARSE_ERROR", f"line {lineno}: repeated key {key!r}",
                               line=lineno, key=key)
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise BorelNSError("PARSE_ERROR", f"line {lineno}: bad value for {key!r}: {exc}",
                               line=lineno, key=key) from exc
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    """Configuration text listing every key in declaration order."""
    return "".join(f"{name} = {_format(getattr(cfg, name))}\n" for name in _FIELDS)


def validate_config(cfg: RunConfig) -> None:
    """Raise ``CONFIG_INVALID`` on the first violated invariant."""

    def check(cond: bool, msg: str) -> None:
        if not cond:
            raise BorelNSError("CONFIG_INVALID", msg)

    check(cfg.n >= 4 and cfg.n % 2 == 0, "n must be an even integer >= 4")
    check(cfg.box_scale > 0, "box_scale must be positive")
    check(0 < cfg.dealias <= 1, "dealias must lie in (0, 1]")
    check(cfg.mu > 3, "mu must exceed 3")
    check(cfg.beta >= 0, "beta must be non-negative")
    check(cfg.preset in CONFIG_PRESETS, f"preset must be one of {CONFIG_PRESETS}")
    check(cfg.preset == "zero" or cfg.amplitude > 0, "amplitude must be positive")
    check(cfg.n_nodes >= 16, "n_nodes must be at least 16")
    check(cfg.p_max_policy in P_MAX_POLICIES, f"p_max_policy must be one of {P_MAX_POLICIES}")
    check(cfg.p_max_factor > 0 and cfg.p_max > 0, "p_max settings must be positive")
    check(cfg.picard_tol > 0 and cfg.picard_max_iter >= 1, "bad Picard settings")
    check(cfg.l_max >= 2, "l_max must be at least 2")
    check(all(t > 0 for t in cfg.t_list), "t_list entries must be positive")
    check(cfg.oracle_steps >= 1, "oracle_steps must be positive")
    check(cfg.oracle_tol > 0 and cfg.series_tol > 0, "tolerances must be positive")
    check(cfg.lemma_trials >= 1, "lemma_trials must be positive")
    check(cfg.threads >= 1, "threads must be positive")
    check(cfg.seed >= 0, "seed must be non-negative")
