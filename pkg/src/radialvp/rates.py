"""Mixed power-logarithm rate fits and the asymptotic-rate report.

Growth laws are fitted as ``y ~ C t**a (ln t)**b`` by linear least squares of
``ln y`` on ``(1, ln t, ln ln t)``. Two-sided ``~`` claims are checked as
plateau bands of ``y / (t**a (ln t)**b)`` with the expected exponents;
one-sided bounds are checked as the drift of the normalized quantity over
the final decade in the direction that would violate the bound.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ModelKind


class UnfittableError(ValueError):
    """The fit window does not determine the requested law."""


@dataclass(frozen=True)
class RateFit:
    a: float
    b: float
    C: float
    r2: float
    window: tuple
    band: float
    n_points: int


def _select(t, y, window):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    return t[sel], y[sel]


def band_ratio(values) -> float:
    """``max / min`` of a positive sequence."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan
    lo = float(np.min(v))
    if not lo > 0.0:
        return math.inf
    return float(np.max(v)) / lo


def normalized(t, y, a: float, b: float) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.asarray(y, dtype=np.float64) / (t ** a * np.log(t) ** b)


def plateau_band(t, y, a: float, b: float, window, decades: float = 1.0) -> float:
    """Band ratio of ``y t**-a (ln t)**-b`` over the last ``decades`` of ``window``."""
    tt, yy = _select(t, y, (window[1] / 10 ** decades, window[1]))
    return band_ratio(normalized(tt, yy, a, b))


def fit_power_log(t, y, window: Optional[Sequence[float]] = None) -> RateFit:
    """Least-squares fit of ``ln y = ln C + a ln t + b ln ln t`` on ``window``."""
    t = np.asarray(t, dtype=np.float64)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = float(window[0]), float(window[1])
    if lo < math.e:
        raise UnfittableError(f"fit window must start at t >= e so that ln ln t is defined, got {lo}")
    if not hi > lo:
        raise UnfittableError("empty fit window")
    tt, yy = _select(t, y, (lo, hi))
    if np.any(~(yy > 0.0)):
        raise UnfittableError("power-log fits need y > 0 on the window")
    if np.unique(tt).size < 3:
        raise UnfittableError("fewer than three distinct times in the window")
    lt = np.log(tt)
    X = np.column_stack((np.ones_like(lt), lt, np.log(lt)))
    if np.linalg.cond(X) > 1e12:
        raise UnfittableError("window too narrow: ln t and ln ln t are numerically collinear")
    ly = np.log(yy)
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    a, b = float(coef[1]), float(coef[2])
    band = plateau_band(tt, yy, a, b, (lo, hi))
    return RateFit(a, b, float(math.exp(coef[0])), r2, (lo, hi), band, int(tt.size))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    window: tuple
    n_points: int


def fit_linear_in_log(t, y, window) -> LinearFit:
    """Ordinary least squares of ``y`` against ``ln t``."""
    tt, yy = _select(t, y, window)
    if np.unique(tt).size < 3:
        raise UnfittableError("fewer than three distinct times in the window")
    lt = np.log(tt)
    X = np.column_stack((np.ones_like(lt), lt))
    coef, *_ = np.linalg.lstsq(X, yy, rcond=None)
    resid = yy - X @ coef
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return LinearFit(float(coef[1]), float(coef[0]), r2, tuple(window), int(tt.size))


# --- theorem checks ---------------------------------------------------------

@dataclass(frozen=True)
class RateTolerances:
    exponent_a: float = 0.05
    exponent_b: float = 0.15
    band: float = 1.5
    relativistic_radius_band: float = 1.1
    min_r2: float = 0.99
    fit_decades: float = 3.0
    band_decades: float = 1.0
    min_decades: float = 2.0
    turnaround_factor: float = 10.0


@dataclass
class Claim:
    name: str
    kind: str            # exponent | plateau | upper | lower | sandwich | linear-log
    expected: dict
    measured: dict
    passed: bool
    detail: str = ""


@dataclass
class TheoremReport:
    model: ModelKind
    window: tuple
    tolerances: RateTolerances
    claims: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.claims) and all(c.passed for c in self.claims)

    def claim(self, name: str) -> Claim:
        for c in self.claims:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema": "radialvp.theorem-report/1",
            "model": self.model.value,
            "window": list(self.window),
            "verdict": "pass" if self.passed else "fail",
            "tolerances": asdict(self.tolerances),
            "claims": [asdict(c) for c in self.claims],
            "fits": {k: asdict(v) for k, v in self.fits.items()},
            "notes": list(self.notes),
        }


def _envelope_change(t, g, window, decades: float, pick) -> float:
    """Ratio of ``pick(g)`` over the final ``decades`` to the ``decades`` before.

    Comparing envelopes rather than single frames keeps the verdict robust to
    frame-to-frame scatter of a noisy estimator.
    """
    hi = window[1]
    mid = hi / 10 ** decades
    lo = max(window[0], mid / 10 ** decades)
    late = g[(t >= mid) & (t <= hi)]
    early = g[(t >= lo) & (t < mid)]
    if late.size == 0 or early.size == 0:
        return math.inf
    a, b = float(pick(late)), float(pick(early))
    return a / b if b > 0 else math.inf


def _sandwich_claim(name, t, y, lower, upper, window, tol: RateTolerances) -> Claim:
    """``lower(t) <~ y <~ upper(t)``: neither normalized envelope drifts out by more than the band."""
    tw, yw = _select(t, y, window)
    up = yw / upper(tw)
    low = yw / lower(tw)
    growth = _envelope_change(tw, up, window, tol.band_decades, np.max)
    shrink = _envelope_change(tw, low, window, tol.band_decades, np.min)
    shrink = 1.0 / shrink if shrink > 0 else math.inf
    c_lo = float(np.min(low)) if yw.size else math.nan
    c_hi = float(np.max(up)) if yw.size else math.nan
    ok = (growth <= tol.band and shrink <= tol.band and math.isfinite(c_hi) and c_lo > 0.0)
    return Claim(name, "sandwich", {"band": tol.band},
                 {"upper_growth": growth, "lower_shrink": shrink, "c_lower": c_lo, "C_upper": c_hi},
                 ok, "max of y/upper and min of y/lower compared between the last two decades")


def _plateau_claim(name, t, y, a, b, window, limit, decades) -> Claim:
    band = plateau_band(t, y, a, b, window, decades)
    return Claim(name, "plateau", {"a": a, "b": b, "band": limit}, {"band": band},
                 bool(band <= limit), f"max/min of y t^-{a} (ln t)^-{b} over the final decade")


def _exponent_claim(name, fit: RateFit, a, b, tol: RateTolerances) -> Claim:
    ok = abs(fit.a - a) <= tol.exponent_a and abs(fit.b - b) <= tol.exponent_b
    return Claim(name, "exponent", {"a": a, "b": b, "tol_a": tol.exponent_a, "tol_b": tol.exponent_b},
                 {"a": fit.a, "b": fit.b, "r2": fit.r2}, bool(ok))


def _p_label(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def check_theorem(series, model: ModelKind, tolerances: RateTolerances = RateTolerances(),
                  window: Optional[Sequence[float]] = None,
                  max_turnaround: Optional[float] = None) -> TheoremReport:
    """Compare a diagnostics time series against the asymptotic rates of the model.

    The default window is the last ``fit_decades`` decades of the series,
    started no earlier than ``turnaround_factor`` times the largest
    turn-around time. A window narrower than ``min_decades`` fails every
    claim instead of passing silently.
    """
    model = ModelKind.parse(model)
    tol = tolerances
    t = series.column("t")
    if max_turnaround is None:
        max_turnaround = series.metadata.get("max_turnaround") if hasattr(series, "metadata") else None
    t_hi = float(t[-1]) if t.size else math.nan
    if window is None:
        lo, hi = t_hi / 10 ** tol.fit_decades, t_hi
    else:
        lo, hi = float(window[0]), float(window[1])
    notes = []
    if max_turnaround:
        start = tol.turnaround_factor * float(max_turnaround)
        if start > lo:
            notes.append(f"window start raised from {lo:g} to {start:g} (turn-around)")
            lo = start
    if lo < math.e:
        notes.append(f"window start raised from {lo:g} to e")
        lo = math.e
    positive = t[t > 0.0]
    if positive.size and positive[0] > lo:
        notes.append(f"window start raised from {lo:g} to the first frame {positive[0]:g}")
        lo = float(positive[0])
    report = TheoremReport(model, (lo, hi), tol, notes=notes)
    if series.metadata.get("all_turned") is False:
        report.notes.append("some shells had not turned around by the end of the run")
    if not (hi > lo) or math.log10(hi / lo) < tol.min_decades - 1e-9:
        report.claims.append(Claim("window", "window", {"min_decades": tol.min_decades},
                                   {"decades": math.log10(hi / lo) if hi > lo else 0.0}, False,
                                   "insufficient fit window"))
        return report
    win = (lo, hi)

    def col(name):
        return series.column(name)

    for name in ("w_max", "r_max", "U_sup", "E_sup", "rho_sup", "kinetic"):
        try:
            report.fits[name] = fit_power_log(t, col(name), win)
        except UnfittableError as exc:
            report.notes.append(f"{name}: {exc}")

    def sqrt_log(x):
        return np.sqrt(np.log(x))

    if model is ModelKind.CLASSICAL:
        for name, (a, b) in (("w_max", (0.0, 0.5)), ("r_max", (1.0, 0.5))):
            fit = report.fits.get(name)
            if fit is None:
                report.claims.append(Claim(name, "exponent", {"a": a, "b": b}, {}, False, "unfittable"))
            else:
                report.claims.append(_exponent_claim(name, fit, a, b, tol))
        report.claims.append(_plateau_claim("U_sup", t, col("U_sup"), 0.0, 1.0, win, tol.band, tol.band_decades))
        p_all = [math.inf] + [p for p in series.p_list]
        for p in p_all:
            e = 1.0 - 2.0 / p if math.isfinite(p) else 1.0
            y = col("E_sup") if math.isinf(p) else col(f"E_p_{p}")
            report.claims.append(_sandwich_claim(
                f"E_p[{_p_label(p)}]", t, y,
                lambda x, e=e: (x * sqrt_log(x)) ** (-e), lambda x, e=e: x ** (-e), win, tol))
        report.claims.append(_sandwich_claim(
            "rho_sup", t, col("rho_sup"), lambda x: 1.0 / (x * x * np.log(x)), lambda x: 1.0 / x, win, tol))
    else:
        try:
            lin = fit_linear_in_log(t, col("w_max"), win)
            report.fits["w_max_vs_ln_t"] = lin
            ok = lin.slope > 0 and lin.r2 > tol.min_r2
            report.claims.append(Claim("w_max", "linear-log", {"min_r2": tol.min_r2, "slope": "> 0"},
                                       {"slope": lin.slope, "r2": lin.r2}, bool(ok)))
        except UnfittableError as exc:
            report.claims.append(Claim("w_max", "linear-log", {"min_r2": tol.min_r2}, {}, False, str(exc)))
        report.claims.append(_plateau_claim("r_max", t, col("r_max"), 1.0, 0.0, win,
                                            tol.relativistic_radius_band, tol.band_decades))
        report.claims.append(_plateau_claim("U_sup", t, col("U_sup"), 0.0, 1.0, win, tol.band, tol.band_decades))
        p_all = [p for p in series.p_list] + [math.inf]
        for p in p_all:
            e = 1.0 - 2.0 / p if math.isfinite(p) else 1.0
            y = col("E_sup") if math.isinf(p) else col(f"E_p_{p}")
            report.claims.append(_plateau_claim(f"E_p[{_p_label(p)}]", t, y, -e, 0.0, win, tol.band,
                                                tol.band_decades))
        report.claims.append(_sandwich_claim(
            "rho_sup", t, col("rho_sup"), lambda x: 1.0 / (x * x), lambda x: 1.0 / x, win, tol))
    report.claims.append(_plateau_claim("kinetic", t, col("kinetic"), 0.0, 1.0, win, tol.band, tol.band_decades))
    return report


def per_shell_rates(trajectories, window) -> dict:
    """Exploratory power-log exponents of each recorded shell's ``r`` and ``w``.

    Nothing is asserted about these; individual shells may grow more slowly
    than the support extrema.
    """
    a_r, b_r, a_w, b_w = [], [], [], []
    for tr in trajectories:
        times, r, w = tr.arrays()
        try:
            fr = fit_power_log(times, r, window)
            fw = fit_power_log(times, w, window)
        except UnfittableError:
            continue
        a_r.append(fr.a)
        b_r.append(fr.b)
        a_w.append(fw.a)
        b_w.append(fw.b)

    def summary(v):
        if not v:
            return {}
        q = np.quantile(v, [0.0, 0.1, 0.5, 0.9, 1.0])
        return dict(zip(("min", "q10", "median", "q90", "max"), map(float, q)))

    return {"n": len(a_r), "r_a": summary(a_r), "r_b": summary(b_r), "w_a": summary(a_w), "w_b": summary(b_w)}
