"""Command line front end: ``radialvp {run,fit,sample-check,oracle-compare}``.

Exit codes: 0 when every check passes, 2 when a rate or oracle check fails,
1 on configuration, I/O or integration errors (a JSON error record is
written to stderr).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import TEMPLATES, ConfigError, ScenarioConfig, load_config, serialize_config, with_overrides
from .core import ModelKind, richardson_ratios, total_mass
from .diagnostics import DiagnosticsFrame, TimeSeries, frame_observer
from .dynamics import geometric_schedule, integrate
from .oracle import compare_models
from .rates import TheoremReport, check_theorem

log = logging.getLogger("radialvp")

ENV_OUT = "RADIALVP_OUT"
ENV_THREADS = "RADIALVP_THREADS"
REPORT_SCHEMA = "radialvp.run-summary/1"

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def frame_columns(p_list) -> list[str]:
    return (["t", "kinetic", "potential", "total_energy", "mass", "r_max", "w_max", "r_min", "E_sup"]
            + [f"E_p_{p:g}" for p in p_list] + ["U_sup", "rho_sup"])


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str):
    """Write ``text`` to a temporary sibling, then rename it into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def frames_csv(series: TimeSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    p_list = series.p_list
    writer.writerow(frame_columns(p_list))
    for f in series.frames:
        row = [f.t, f.kinetic, f.potential, f.total_energy, f.mass, f.r_max, f.w_max, f.r_min, f.E_sup]
        row += [v for _, v in f.E_p] + [f.U_sup, f.rho_sup]
        writer.writerow([_num(x) for x in row])
    return buf.getvalue()


def read_frames(path, model, metadata: Optional[dict] = None) -> TimeSeries:
    """Rebuild a :class:`TimeSeries` from ``frames.csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty frames file")
    header = rows[0]
    fixed = ["t", "kinetic", "potential", "total_energy", "mass", "r_max", "w_max", "r_min", "E_sup"]
    if header[:9] != fixed or header[-2:] != ["U_sup", "rho_sup"]:
        raise ValueError(f"{path}: unexpected column layout {header}")
    p_list = [float(h[4:]) for h in header[9:-2]]
    series = TimeSeries(model=ModelKind.parse(model), metadata=dict(metadata or {}))
    for row in rows[1:]:
        v = [float(x) for x in row]
        e_p = tuple(zip(p_list, v[9:-2]))
        series.append(DiagnosticsFrame(*v[:9], E_p=e_p, U_sup=v[-2], rho_sup=v[-1]))
    return series


def trajectories_csv(trajectories) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["shell", "t", "r", "w"])
    for tr in trajectories:
        for t, r, w in zip(tr.times, tr.r, tr.w):
            writer.writerow([tr.shell, _num(t), _num(r), _num(w)])
    return buf.getvalue()


@dataclass
class RunSummary:
    config: str
    wall_time: float
    n_frames: int
    report: Optional[TheoremReport]
    conservation: dict

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.report is None or self.report.passed else EXIT_FAIL

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "config": self.config,
            "wall_time": self.wall_time,
            "frames": self.n_frames,
            "conservation": self.conservation,
            "theorem": self.report.to_dict() if self.report is not None else None,
        }


def conservation_stats(series: TimeSeries) -> dict:
    mass = series.column("mass")
    energy = series.column("total_energy")
    e0 = energy[0]
    return {
        "mass_initial": float(mass[0]),
        "mass_bitwise_constant": bool(np.all(mass == mass[0])),
        "energy_initial": float(e0),
        "energy_max_relative_drift": float(np.max(np.abs(energy - e0)) / abs(e0)) if e0 != 0 else math.nan,
    }


def _record_spec(cfg: ScenarioConfig):
    traj = cfg.output.trajectories
    if traj == "none":
        return None
    if traj == "all":
        return "all"
    return [int(x) for x in traj.split(",")]


def run_scenario(cfg: ScenarioConfig) -> RunSummary:
    """Integrate a scenario and write its artifacts into ``cfg.output.dir``.

    Writes ``frames.csv``, ``report.json``, ``series_meta.json`` and, when
    shells are recorded, ``trajectories.csv``. Every file is written
    atomically, so a failed run never leaves a partial CSV behind.
    """
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    ens = cfg.distribution.ensemble()
    o = cfg.output
    times = geometric_schedule(o.t0, o.gamma, o.t_max)
    observer = frame_observer(cfg.diagnostics.p_list, cfg.diagnostics.refine_tol)
    log.info("integrating %d shells (%s) to t=%g", len(ens), cfg.model.value, o.t_max)
    start = time.perf_counter()
    res = integrate(ens, cfg.model, cfg.integrator, times, record=_record_spec(cfg), observer=observer)
    wall = time.perf_counter() - start
    series = res.series
    if not o.include_zero and series.frames and series.frames[0].t < o.t0:
        series = TimeSeries(series.model, series.frames[1:], series.metadata)
    report = None
    if cfg.rates.check:
        report = check_theorem(series, cfg.model, cfg.rates.tolerances, window=cfg.rates.window)
    summary = RunSummary(serialize_config(cfg), wall, len(series), report, conservation_stats(series))
    meta = dict(series.metadata)
    meta.update({"check": cfg.rates.check, "window": list(cfg.rates.window) if cfg.rates.window else None,
                 "tolerances": asdict(cfg.rates.tolerances)})
    _atomic_write(out / "frames.csv", frames_csv(series))
    if res.trajectories:
        _atomic_write(out / "trajectories.csv", trajectories_csv(res.trajectories))
    _atomic_write(out / "series_meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _atomic_write(out / "report.json", json.dumps(summary.to_dict(), indent=2) + "\n")
    log.info("wrote %d frames to %s in %.1f s", len(series), out, wall)
    return summary


def refit(run_dir) -> TheoremReport:
    """Recompute the rate report from a run directory without re-simulating."""
    from .rates import RateTolerances
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "series_meta.json").read_text(encoding="utf-8"))
    series = read_frames(run_dir / "frames.csv", meta["model"], meta)
    window = tuple(meta["window"]) if meta.get("window") else None
    return check_theorem(series, meta["model"], RateTolerances(**meta["tolerances"]), window=window)


# --- command handlers -------------------------------------------------------

def _cmd_run(cfg: ScenarioConfig, args) -> int:
    summary = run_scenario(cfg)
    if summary.report is not None:
        for c in summary.report.claims:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<12} {json.dumps(c.measured)}")
    print(f"energy drift {summary.conservation['energy_max_relative_drift']:.3e}  "
          f"frames {summary.n_frames}  wall {summary.wall_time:.1f} s")
    return summary.exit_code


def _cmd_fit(args) -> int:
    report = refit(args.run_dir)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        _atomic_write(Path(args.out), text + "\n")
    else:
        print(text)
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_sample_check(cfg: ScenarioConfig, args) -> int:
    ens = cfg.distribution.ensemble()
    print(f"shells        {len(ens)}")
    print(f"total mass    {total_mass(ens):.17g}")
    if cfg.distribution.kind != "shells":
        masses, ratios = richardson_ratios(cfg.distribution.spec(), levels=args.levels)
        for k, m in enumerate(masses):
            print(f"level {k}  raw mass {m:.17g}")
        for k, r in enumerate(ratios):
            print(f"ratio {k}  {r:.6g}")
    return EXIT_OK


def _cmd_oracle(cfg: ScenarioConfig, args) -> int:
    ens = cfg.distribution.ensemble()
    if len(ens) > 16:
        raise ConfigError([(None, f"oracle comparison is limited to 16 shells, scenario has {len(ens)}")])
    rep = compare_models(ens, cfg.model, cfg.oracle, cfg.integrator)
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radialvp", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--config", type=Path, help="scenario file")
        g.add_argument("--template", choices=sorted(TEMPLATES), help="built-in scenario")
        p.add_argument("--out", help=f"output directory (env {ENV_OUT})")
        p.add_argument("--threads", type=int, help=f"worker threads (env {ENV_THREADS})")

    scenario_args(sub.add_parser("run", help="integrate a scenario and check the rates"))
    p_sc = sub.add_parser("sample-check", help="report sampled mass and grid-convergence ratios")
    scenario_args(p_sc)
    p_sc.add_argument("--levels", type=int, default=3)
    scenario_args(sub.add_parser("oracle-compare", help="compare against the Cartesian ring system"))
    p_fit = sub.add_parser("fit", help="re-fit rates from an existing run directory")
    p_fit.add_argument("run_dir", type=Path)
    p_fit.add_argument("--out", help="write the report here instead of stdout")
    p_tpl = sub.add_parser("template", help="print a built-in scenario file")
    p_tpl.add_argument("name", choices=sorted(TEMPLATES))
    return parser


def _load(args) -> ScenarioConfig:
    from .config import parse_config
    cfg = load_config(args.config) if args.config else parse_config(TEMPLATES[args.template])
    out = args.out if args.out is not None else os.environ.get(ENV_OUT)
    threads = args.threads
    if threads is None and os.environ.get(ENV_THREADS):
        try:
            threads = int(os.environ[ENV_THREADS])
        except ValueError:
            raise ConfigError([(None, f"{ENV_THREADS} must be an integer")]) from None
    return with_overrides(cfg, out, threads)


def _error_record(exc: BaseException, command: str) -> str:
    record = {"error": type(exc).__name__, "message": str(exc), "command": command}
    if isinstance(exc, ConfigError):
        record["locations"] = [{"line": ln, "message": msg} for ln, msg in exc.errors]
    return json.dumps(record)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "template":
            sys.stdout.write(TEMPLATES[args.name])
            return EXIT_OK
        if args.command == "fit":
            return _cmd_fit(args)
        cfg = _load(args)
        handler = {"run": _cmd_run, "sample-check": _cmd_sample_check, "oracle-compare": _cmd_oracle}[args.command]
        return handler(cfg, args)
    except (ConfigError, OSError, ValueError, RuntimeError, FloatingPointError, KeyError) as exc:
        print(_error_record(exc, args.command), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
