"""Scenario files: a small sectioned ``key = value`` format.

Example::

    [model]
    kind = vp

    [distribution]
    kind = box-bump
    r_range = 1, 2
    w_range = -0.5, 0.5
    ell_range = 0.5, 1
    resolution = 16, 16, 16
    total_mass = 10

Every key has a default except ``[model] kind``. Unknown sections and keys
are rejected with their line numbers. :func:`serialize_config` writes every
field explicitly, so ``parse(serialize(cfg)) == cfg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Optional

import numpy as np

from .core import DISTRIBUTION_KINDS, DistributionSpec, Ensemble, ModelKind, sample_ensemble
from .dynamics import IntegratorConfig
from .oracle import RingConfig
from .rates import RateTolerances


class ConfigError(ValueError):
    """One or more problems in a scenario file, each with its line number."""

    def __init__(self, errors: list[tuple[Optional[int], str]]):
        self.errors = errors
        super().__init__("; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in errors))


@dataclass(frozen=True)
class DistributionConfig:
    kind: str = "box-bump"
    r_range: tuple = (1.0, 2.0)
    w_range: tuple = (-0.5, 0.5)
    ell_range: tuple = (0.5, 1.0)
    resolution: tuple = (16, 16, 16)
    amplitude: float = 1.0
    total_mass: Optional[float] = 10.0
    centers: Optional[tuple] = None
    half_widths: Optional[tuple] = None
    value: float = 1.0
    # explicit shell lists for kind = shells
    r: tuple = ()
    w: tuple = ()
    ell: tuple = ()
    mu: tuple = ()

    def spec(self) -> DistributionSpec:
        return DistributionSpec(self.kind, self.r_range, self.w_range, self.ell_range, self.resolution,
                                amplitude=self.amplitude, total_mass=self.total_mass, centers=self.centers,
                                half_widths=self.half_widths, values=self.value)

    def ensemble(self) -> Ensemble:
        if self.kind == "shells":
            return Ensemble(np.array(self.r), np.array(self.w), np.array(self.ell), np.array(self.mu),
                            time=0.0, ell_min=min(self.ell))
        return sample_ensemble(self.spec())


@dataclass(frozen=True)
class OutputConfig:
    t0: float = 1.0
    gamma: float = 10 ** 0.125
    t_max: float = 1e6
    include_zero: bool = True
    dir: str = "out"
    trajectories: str = "none"   # none | all | comma-separated shell indices


@dataclass(frozen=True)
class DiagnosticsConfig:
    p_list: tuple = (3.0, 4.0)
    refine_tol: float = 0.05
    min_shells: int = 16


@dataclass(frozen=True)
class RatesConfig:
    check: bool = True
    window: Optional[tuple] = None
    tolerances: RateTolerances = RateTolerances()


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelKind
    distribution: DistributionConfig = DistributionConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    output: OutputConfig = OutputConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    rates: RatesConfig = RatesConfig()
    oracle: RingConfig = RingConfig()
    run: RunConfig = RunConfig()


# --- value codecs -----------------------------------------------------------

def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _floats(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        vals = tuple(_float(x) for x in s.split(",") if x.strip())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {len(vals)}")
        return vals
    return parse


def _ints(n: int) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        vals = tuple(int(x) for x in s.split(","))
        if len(vals) != n:
            raise ValueError(f"expected {n} comma-separated integers, got {len(vals)}")
        return vals
    return parse


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def wrapped(s: str):
        return None if s.strip().lower() in ("none", "auto") else parse(s)
    return wrapped


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, ModelKind):
        return v.value
    return str(v)


_TOL_KEYS = {f.name: _float for f in fields(RateTolerances)}

_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "model": {"kind": lambda s: ModelKind.parse(s.strip())},
    "distribution": {
        "kind": str.strip, "r_range": _floats(2), "w_range": _floats(2), "ell_range": _floats(2),
        "resolution": _ints(3), "amplitude": _float, "total_mass": _optional(_float),
        "centers": _optional(_floats(3)), "half_widths": _optional(_floats(3)), "value": _float,
        "r": _floats(), "w": _floats(), "ell": _floats(), "mu": _floats(),
    },
    "integrator": {"rtol": _float, "atol": _float, "initial_step": _optional(_float), "max_growth": _float,
                   "safety": _float, "min_shrink": _float, "max_steps": int},
    "output": {"t0": _float, "gamma": _float, "t_max": _float, "include_zero": _bool, "dir": str.strip,
               "trajectories": str.strip},
    "diagnostics": {"p_list": _floats(), "refine_tol": _float, "min_shells": int},
    "rates": {"check": _bool, "window": _optional(_floats(2)), **_TOL_KEYS},
    "oracle": {"points_per_ring": int, "softening": _float, "horizon": _float, "tolerance": _float,
               "n_samples": int, "tangential_sign": _float, "self_interaction": _bool},
    "run": {"seed": int, "threads": int},
}


def _scan(text: str):
    """Yield ``(lineno, section, key, value)``; syntax problems go to ``errors``."""
    section = None
    entries, errors, seen_sections = [], [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((lineno, f"malformed section header {raw.strip()!r}"))
                continue
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                errors.append((lineno, f"unknown section [{section}]"))
            elif section in seen_sections:
                errors.append((lineno, f"duplicate section [{section}] (first at line {seen_sections[section]})"))
            seen_sections.setdefault(section, lineno)
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            errors.append((lineno, f"key {key!r} appears before any [section] header"))
            continue
        entries.append((lineno, section, key, value))
    return entries, errors, seen_sections


def _validate(cfg: ScenarioConfig, where: dict) -> list:
    errs = []

    def err(section, key, msg):
        errs.append((where.get((section, key), where.get((section, None))), msg))

    o = cfg.output
    if not (o.t0 >= 1.0 and o.t_max > o.t0):
        err("output", "t_max", f"need t_max > t0 >= 1, got t0={o.t0}, t_max={o.t_max}")
    if not o.gamma > 1.0:
        err("output", "gamma", "gamma must exceed 1")
    if o.trajectories not in ("none", "all"):
        try:
            idx = [int(x) for x in o.trajectories.split(",")]
            if min(idx) < 0:
                raise ValueError
        except ValueError:
            err("output", "trajectories", "trajectories must be none, all or a list of shell indices")
    for p in cfg.diagnostics.p_list:
        if not p > 2.0:
            err("diagnostics", "p_list", f"p = {p:g} is not allowed: the field L^p norm requires p > 2")
    if not cfg.diagnostics.refine_tol > 0:
        err("diagnostics", "refine_tol", "refine_tol must be positive")
    d = cfg.distribution
    if d.kind == "shells":
        n = len(d.r)
        if n == 0 or any(len(v) != n for v in (d.w, d.ell, d.mu)):
            err("distribution", "r", "kind = shells needs equally long, nonempty r, w, ell and mu lists")
    elif d.kind not in DISTRIBUTION_KINDS:
        err("distribution", "kind", f"unknown distribution kind {d.kind!r}")
    if cfg.rates.window is not None and not cfg.rates.window[1] > cfg.rates.window[0] > 0:
        err("rates", "window", "window must be 'auto' or lo, hi with 0 < lo < hi")
    if cfg.run.threads < 1:
        err("run", "threads", "threads must be at least 1")
    return errs


def parse_config(text: str) -> ScenarioConfig:
    """Parse and fully validate a scenario file, raising :class:`ConfigError`."""
    entries, errors, sections = _scan(text)
    values: dict[str, dict[str, Any]] = {s: {} for s in _SCHEMA}
    where: dict = {(s, None): ln for s, ln in sections.items()}
    for lineno, section, key, raw in entries:
        schema = _SCHEMA.get(section)
        if schema is None:
            continue   # already reported
        if key not in schema:
            errors.append((lineno, f"unknown key {key!r} in [{section}]"))
            continue
        if key in values[section]:
            errors.append((lineno, f"duplicate key {key!r} in [{section}] (first at line {where[(section, key)]})"))
            continue
        try:
            values[section][key] = schema[key](raw)
        except (ValueError, TypeError) as exc:
            errors.append((lineno, f"[{section}] {key}: {exc}"))
            continue
        where[(section, key)] = lineno
    if "model" not in sections:
        errors.insert(0, (None, "missing [model] section"))
    elif "kind" not in values["model"] and not any(ln == where.get(("model", "kind")) for ln, _ in errors):
        errors.append((sections["model"], "[model] needs kind = vp or rvp"))
    if errors:
        raise ConfigError(errors)

    def build(section, cls, **extra):
        try:
            return cls(**values[section], **extra)
        except (ValueError, TypeError) as exc:
            raise ConfigError([(sections.get(section), f"[{section}] {exc}")]) from None

    rates_vals = dict(values["rates"])
    tol = RateTolerances(**{k: rates_vals.pop(k) for k in list(rates_vals) if k in _TOL_KEYS})
    cfg = ScenarioConfig(
        model=values["model"]["kind"],
        distribution=build("distribution", DistributionConfig),
        integrator=build("integrator", IntegratorConfig),
        output=build("output", OutputConfig),
        diagnostics=build("diagnostics", DiagnosticsConfig),
        rates=RatesConfig(tolerances=tol, **rates_vals),
        oracle=build("oracle", RingConfig),
        run=build("run", RunConfig),
    )
    errs = _validate(cfg, where)
    if cfg.distribution.kind != "shells" and not errs:
        try:
            cfg.distribution.spec()
        except ValueError as exc:
            errs.append((sections.get("distribution"), f"[distribution] {exc}"))
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _section_items(obj) -> list:
    return [(f.name, getattr(obj, f.name)) for f in fields(obj)]


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form listing every field."""
    out = ["[model]", f"kind = {cfg.model.value}", ""]
    for name in ("distribution", "integrator", "output", "diagnostics"):
        out.append(f"[{name}]")
        out += [f"{k} = {_fmt(v)}" for k, v in _section_items(getattr(cfg, name)) if not (v == () and name == "distribution")]
        out.append("")
    out.append("[rates]")
    out.append(f"check = {_fmt(cfg.rates.check)}")
    out.append(f"window = {_fmt(cfg.rates.window) if cfg.rates.window else 'auto'}")
    out += [f"{k} = {_fmt(v)}" for k, v in _section_items(cfg.rates.tolerances)]
    out.append("")
    out.append("[oracle]")
    out += [f"{k} = {_fmt(v)}" for k, v in _section_items(cfg.oracle) if k != "threads"]
    out.append("")
    out.append("[run]")
    out += [f"{k} = {_fmt(v)}" for k, v in _section_items(cfg.run)]
    return "\n".join(out) + "\n"


def with_overrides(cfg: ScenarioConfig, out_dir: Optional[str] = None, threads: Optional[int] = None) -> ScenarioConfig:
    if out_dir is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=out_dir))
    if threads is not None:
        if threads < 1:
            raise ConfigError([(None, "threads must be at least 1")])
        cfg = replace(cfg, run=replace(cfg.run, threads=threads), oracle=replace(cfg.oracle, threads=threads))
    return cfg


# --- templates --------------------------------------------------------------

REFERENCE_VP = """\
# Classical flagship: 4096 shells of a C^1 bump, evolved to t = 1e6.
[model]
kind = vp

[distribution]
kind = box-bump
r_range = 1, 2
w_range = -0.5, 0.5
ell_range = 0.5, 1
resolution = 16, 16, 16
total_mass = 10

[integrator]
rtol = 1e-10
atol = 1e-12

[output]
t0 = 1
t_max = 1e6
"""

REFERENCE_RVP = REFERENCE_VP.replace("Classical", "Relativistic").replace("kind = vp", "kind = rvp")

LONE_SHELL = """\
# One shell at r = 1 with w = -1 and ell = 1; mass does not act on itself.
[model]
kind = vp

[distribution]
kind = shells
r = 1
w = -1
ell = 1
mu = 1

[integrator]
rtol = 1e-12
atol = 1e-14

[output]
t0 = 1
t_max = 100
trajectories = all

[rates]
check = false
"""

ORACLE_4 = """\
# Four non-crossing shells for the Cartesian ring comparison.
[model]
kind = vp

[distribution]
kind = shells
r = 1, 2, 3, 4
w = 0.5, 1, 1.5, 2
ell = 0.25, 1, 2.25, 4
mu = 1, 1, 1, 1

[output]
t0 = 1
t_max = 10

[rates]
check = false

[oracle]
points_per_ring = 256
horizon = 10
tolerance = 1e-3
"""

TEMPLATES = {"reference-vp": REFERENCE_VP, "reference-rvp": REFERENCE_RVP,
             "lone-shell": LONE_SHELL, "oracle-4": ORACLE_4}
