"""Characteristic ODEs of the radial system and their self-consistent integration.

Every shell moves along

    dr/dt = w                      dw/dt = ell / r**3 + m / (2 pi r)

(classical) or the relativistic analogue with ``gamma = sqrt(1 + w**2 +
ell/r**2)`` dividing the transport terms. ``m`` is the felt mass of the
shell, recomputed from the stage positions at every Runge-Kutta stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import TWO_PI, Ensemble, ModelKind, RadialState
from .field import felt_mass


class StepSizeUnderflow(RuntimeError):
    """The adaptive step collapsed below the resolvable size."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    initial_step: Optional[float] = None
    max_growth: float = 5.0
    safety: float = 0.9
    min_shrink: float = 0.2
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_growth > 1.0:
            raise ValueError("max_growth must exceed 1")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety factor must lie in (0, 1]")
        if not 0.0 < self.min_shrink < 1.0:
            raise ValueError("min_shrink must lie in (0, 1)")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")


# Dormand-Prince 5(4) with Shampine's continuous extension.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
_ORDER = 4  # exponent base for step control is the embedded (lower) order + 1


@dataclass
class DenseSegment:
    """Quartic interpolant of one accepted step.

    ``y(t0 + theta*h) = y0 + h * sum_j Q[j] * theta**(j+1)``
    """

    t0: float
    h: float
    y0: np.ndarray
    Q: np.ndarray  # shape (4, n)

    def __call__(self, t: float, idx=None) -> np.ndarray:
        theta = (float(t) - self.t0) / self.h
        y0 = self.y0 if idx is None else self.y0[idx]
        Q = self.Q if idx is None else self.Q[:, idx]
        powers = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
        return y0 + self.h * (powers @ Q)


class DormandPrince:
    """Adaptive Dormand-Prince 5(4) driver for ``y' = fun(t, y)``.

    The error of a trial step is the RMS over components of
    ``err / (atol + rtol * max(|y_old|, |y_new|))``; a step is accepted when
    that norm is at most one. ``fun`` is evaluated exactly once per stage.
    """

    def __init__(self, fun: Callable[[float, np.ndarray], np.ndarray], t0: float, y0,
                 cfg: IntegratorConfig, direction: float = 1.0):
        self.fun = fun
        self.cfg = cfg
        self.t = float(t0)
        self.y = np.array(y0, dtype=np.float64)
        self.direction = 1.0 if direction >= 0 else -1.0
        self.f = fun(self.t, self.y)
        self.n_rhs = 1
        self.n_accepted = 0
        self.n_rejected = 0
        self.last: Optional[DenseSegment] = None
        self.last_K: Optional[np.ndarray] = None
        self.h = cfg.initial_step if cfg.initial_step is not None else self._initial_step()

    def _scale(self, y):
        return self.cfg.atol + self.cfg.rtol * np.abs(y)

    def _initial_step(self) -> float:
        # Hairer, Norsett & Wanner, II.4 starting step heuristic
        sc = self._scale(self.y)
        d0 = np.sqrt(np.mean((self.y / sc) ** 2))
        d1 = np.sqrt(np.mean((self.f / sc) ** 2))
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        y1 = self.y + self.direction * h0 * self.f
        f1 = self.fun(self.t + self.direction * h0, y1)
        self.n_rhs += 1
        d2 = np.sqrt(np.mean(((f1 - self.f) / sc) ** 2)) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / (_ORDER + 1))
        return min(100 * h0, h1)

    def _min_step(self) -> float:
        return 1e-14 * max(abs(self.t), 1.0)

    def attempt(self, h: float):
        """One trial step of signed size ``h``; returns ``(y_new, f_new, K, err_norm)``."""
        K = np.empty((7, self.y.size))
        K[0] = self.f
        for s in range(1, 7):
            dy = np.tensordot(_A[s], K[:s], axes=(0, 0)) if s > 1 else _A[s][0] * K[0]
            K[s] = self.fun(self.t + _C[s] * h, self.y + h * dy)
        self.n_rhs += 6
        y_new = self.y + h * np.tensordot(_B[:6], K[:6], axes=(0, 0))
        if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(K[6])):
            return y_new, K[6], K, math.inf
        # K[6] was evaluated at y_new (first-same-as-last)
        err = h * np.tensordot(_E, K, axes=(0, 0))
        sc = self.cfg.atol + self.cfg.rtol * np.maximum(np.abs(self.y), np.abs(y_new))
        norm = float(np.sqrt(np.mean((err / sc) ** 2)))
        return y_new, K[6], K, norm

    def step(self, h_max: Optional[float] = None) -> DenseSegment:
        """Advance by one accepted step no longer than ``h_max``."""
        cfg = self.cfg
        h = self.h if h_max is None else min(self.h, h_max)
        n_rej = 0
        while True:
            if h < self._min_step():
                raise StepSizeUnderflow(
                    f"step size {h:.3e} fell below 1e-14*max(|t|,1) at t={self.t:.17g} after "
                    f"{n_rej} rejections; the right-hand side is stiff or corrupted")
            y_new, f_new, K, norm = self.attempt(self.direction * h)
            if norm <= 1.0:
                break
            n_rej += 1
            self.n_rejected += 1
            if math.isfinite(norm):
                h *= max(cfg.min_shrink, cfg.safety * norm ** (-1.0 / (_ORDER + 1)))
            else:
                h *= cfg.min_shrink
        hs = self.direction * h
        seg = DenseSegment(self.t, hs, self.y, (K.T @ _P).T)
        self.t = self.t + hs
        self.y = y_new
        self.f = f_new
        self.last = seg
        self.last_K = K
        self.n_accepted += 1
        grow = cfg.max_growth if norm == 0.0 else min(cfg.max_growth, cfg.safety * norm ** (-1.0 / (_ORDER + 1)))
        if n_rej:
            grow = min(grow, 1.0)
        self.h = h * max(grow, cfg.min_shrink)
        if self.n_accepted > cfg.max_steps:
            raise RuntimeError(f"exceeded max_steps={cfg.max_steps}")
        return seg


# --- right-hand sides -----------------------------------------------------

def rhs_classical(s: RadialState, felt: float) -> tuple[float, float]:
    if s.r <= 0.0:
        raise ValueError("radius must be positive")
    return s.w, s.ell / s.r ** 3 + felt / (TWO_PI * s.r)


def rhs_relativistic(s: RadialState, felt: float) -> tuple[float, float]:
    if s.r <= 0.0:
        raise ValueError("radius must be positive")
    gamma = math.sqrt(1.0 + s.w * s.w + s.ell / (s.r * s.r))
    return s.w / gamma, s.ell / s.r ** 3 / gamma + felt / (TWO_PI * s.r)


class RadialSystem:
    """Vectorized right-hand side of the coupled shell system.

    State layout is ``y = [r_0..r_{N-1}, w_0..w_{N-1}]``. The enclosed-mass
    profile is rebuilt from the stage radii on every call.
    """

    def __init__(self, ell: np.ndarray, mu: np.ndarray, model: ModelKind):
        self.ell = np.asarray(ell, dtype=np.float64)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.model = ModelKind.parse(model)
        self.n = self.mu.size

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        n = self.n
        r = y[:n]
        w = y[n:]
        out = np.empty_like(y)
        if n == 0:
            return out
        if np.any(~(r > 0.0)):
            # non-positive or NaN radius: let the step controller reject it
            out.fill(np.nan)
            return out
        # felt mass does not depend on the order within a tie, so a stable radius sort suffices
        m = felt_mass(r, self.mu, np.argsort(r, kind="stable"))
        centrifugal = self.ell / r ** 3
        if self.model is ModelKind.CLASSICAL:
            out[:n] = w
            out[n:] = centrifugal + m / (TWO_PI * r)
        else:
            gamma = np.sqrt(1.0 + w * w + self.ell / (r * r))
            out[:n] = w / gamma
            out[n:] = centrifugal / gamma + m / (TWO_PI * r)
        return out


def _pack(ens: Ensemble) -> np.ndarray:
    return np.concatenate((ens.r, ens.w))


def step_ensemble(ens: Ensemble, dt: float, model: ModelKind,
                  cfg: IntegratorConfig = IntegratorConfig()) -> Ensemble:
    """Advance the coupled ensemble by exactly ``dt``.

    The first trial step has size ``dt``; if the embedded error estimate
    rejects it, the step is subdivided adaptively until ``dt`` is covered.
    Negative ``dt`` integrates backwards in time.
    """
    if dt == 0.0 or len(ens) == 0:
        return ens.evolved(ens.r, ens.w, ens.time + dt)
    system = RadialSystem(ens.ell, ens.mu, model)
    cfg_first = IntegratorConfig(cfg.rtol, cfg.atol, abs(dt), cfg.max_growth, cfg.safety,
                                 cfg.min_shrink, cfg.max_steps)
    direction = 1.0 if dt > 0 else -1.0
    solver = DormandPrince(system, ens.time, _pack(ens), cfg_first, direction)
    t_end = ens.time + dt
    while direction * (t_end - solver.t) > 0:
        remaining = abs(t_end - solver.t)
        if remaining <= 4 * np.finfo(float).eps * max(abs(t_end), 1.0):
            break
        solver.step(h_max=remaining)
    n = len(ens)
    return ens.evolved(solver.y[:n], solver.y[n:], t_end)


# --- integration with output ----------------------------------------------

@dataclass
class Trajectory:
    """Samples of one shell at the output times."""

    shell: int
    ell: float
    times: list = field(default_factory=list)
    r: list = field(default_factory=list)
    w: list = field(default_factory=list)
    turnaround: Optional[float] = None
    # dense interpolant of w over the step in which w changed sign: (t0, h, w0, coeffs)
    crossing: Optional[tuple] = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.asarray(self.times), np.asarray(self.r), np.asarray(self.w)


def _bisect_polynomial(w0, coeffs, h, iterations: int = 80):
    """Root in theta of ``w0 + h * sum_j c_j theta**(j+1)`` on [0, 1], vectorized."""
    w0 = np.atleast_1d(np.asarray(w0, dtype=np.float64))
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(4, -1)
    lo = np.zeros_like(w0)
    hi = np.ones_like(w0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        val = w0 + h * sum(coeffs[j] * mid ** (j + 1) for j in range(4))
        neg = val < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def turn_around_time(traj: Trajectory) -> Optional[float]:
    """Time after which the shell's radial momentum stays positive.

    Zero for initially outgoing shells; otherwise the root of ``w`` on the
    dense interpolant of the step that bracketed the sign change, or
    ``None`` if the shell had not turned around by the end of the record.
    """
    if not traj.w:
        return None
    if traj.w[0] >= 0.0:
        return 0.0
    if traj.crossing is None:
        return None
    t0, h, w0, coeffs = traj.crossing
    theta = _bisect_polynomial(w0, np.asarray(coeffs).reshape(4, 1), h)[0]
    return float(t0 + theta * h)


@dataclass
class IntegrationStats:
    n_accepted: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    max_speed: float = 0.0       # max |dr/dt| over accepted steps
    min_dwdt: float = math.inf   # min dw/dt over accepted steps
    wall_time: float = 0.0


@dataclass
class IntegrationResult:
    ensemble: Ensemble
    series: "object"
    trajectories: list
    turnaround: np.ndarray
    stats: IntegrationStats


def validate_schedule(output_times: Sequence[float], t_start: float) -> np.ndarray:
    times = np.asarray(list(output_times), dtype=np.float64)
    if times.size and (np.any(~np.isfinite(times)) or np.any(np.diff(times) <= 0.0)):
        raise ValueError("output times must be finite and strictly increasing")
    if times.size and times[0] < t_start:
        raise ValueError(f"output times start at {times[0]} before the ensemble time {t_start}")
    return times


def integrate(ens: Ensemble, model: ModelKind, cfg: IntegratorConfig, output_times: Sequence[float],
              record: Optional[Sequence[int] | str] = None,
              observer: Optional[Callable[[Ensemble, ModelKind], object]] = None,
              metadata: Optional[dict] = None) -> IntegrationResult:
    """Integrate through every output time, emitting a diagnostics frame at each.

    The initial state always produces the first frame. States at output
    times come from the dense interpolant of the step that covers them.
    ``record`` is ``None``, ``"all"`` or a list of shell indices whose
    samples are kept as :class:`Trajectory` objects. Turn-around times of
    all shells are located on the fly by bisection on the dense output.
    """
    import time as _time

    from .diagnostics import TimeSeries, compute_frame

    model = ModelKind.parse(model)
    times = validate_schedule(output_times, ens.time)
    times = times[times > ens.time]
    observer = observer or compute_frame
    n = len(ens)
    meta = {"N": n, "rtol": cfg.rtol, "atol": cfg.atol, "model": model.value}
    meta.update(metadata or {})
    series = TimeSeries(model=model, metadata=meta)
    if record is None:
        rec_idx = np.array([], dtype=int)
    elif isinstance(record, str):
        if record != "all":
            raise ValueError("record must be None, 'all' or a list of indices")
        rec_idx = np.arange(n)
    else:
        rec_idx = np.asarray(record, dtype=int)
    trajectories = [Trajectory(int(i), float(ens.ell[i])) for i in rec_idx]
    traj_of = {int(i): tr for i, tr in zip(rec_idx, trajectories)}

    def emit(state: Ensemble):
        series.append(observer(state, model))
        for i, tr in zip(rec_idx, trajectories):
            tr.times.append(state.time)
            tr.r.append(float(state.r[i]))
            tr.w.append(float(state.w[i]))

    turnaround = np.where(ens.w >= 0.0, 0.0, np.nan)
    stats = IntegrationStats()
    start = _time.perf_counter()
    emit(ens)
    if n == 0 or times.size == 0:
        stats.wall_time = _time.perf_counter() - start
        for i, tr in zip(rec_idx, trajectories):
            tr.turnaround = None if math.isnan(turnaround[i]) else float(turnaround[i])
        return IntegrationResult(ens, series, trajectories, turnaround, stats)

    system = RadialSystem(ens.ell, ens.mu, model)
    solver = DormandPrince(system, ens.time, _pack(ens), cfg)
    k = 0
    state = ens
    while k < times.size:
        w_old = solver.y[n:].copy()
        seg = solver.step()
        f_new = solver.f
        stats.max_speed = max(stats.max_speed, float(np.max(np.abs(f_new[:n]))))
        stats.min_dwdt = min(stats.min_dwdt, float(np.min(f_new[n:])))
        w_new = solver.y[n:]
        crossed = np.nonzero((w_old < 0.0) & (w_new >= 0.0))[0]
        if crossed.size:
            comp = n + crossed
            coeffs = seg.Q[:, comp]
            theta = _bisect_polynomial(seg.y0[comp], coeffs, seg.h)
            turnaround[crossed] = seg.t0 + theta * seg.h
            for j, i in enumerate(crossed):
                tr = traj_of.get(int(i))
                if tr is not None:
                    tr.crossing = (seg.t0, seg.h, float(seg.y0[n + i]), coeffs[:, j].copy())
        while k < times.size and times[k] <= solver.t:
            y_out = solver.y if times[k] == solver.t else seg(times[k])
            state = ens.evolved(y_out[:n], y_out[n:], times[k])
            emit(state)
            k += 1
    stats.n_accepted = solver.n_accepted
    stats.n_rejected = solver.n_rejected
    stats.n_rhs = solver.n_rhs
    stats.wall_time = _time.perf_counter() - start
    for i, tr in zip(rec_idx, trajectories):
        tr.turnaround = None if math.isnan(turnaround[i]) else float(turnaround[i])
    series.metadata.update({"n_accepted": stats.n_accepted, "n_rejected": stats.n_rejected,
                            "max_turnaround": float(np.nanmax(turnaround)) if np.any(~np.isnan(turnaround)) else None,
                            "all_turned": bool(not np.any(np.isnan(turnaround)))})
    return IntegrationResult(state, series, trajectories, turnaround, stats)


def geometric_schedule(t0: float = 1.0, gamma: float = 10 ** 0.125, t_max: float = 1e6,
                       include_zero: bool = False) -> np.ndarray:
    """Output times ``t0 * gamma**k`` up to ``t_max``, snapped to 12 significant digits."""
    if not (t0 > 0 and gamma > 1 and t_max >= t0):
        raise ValueError("need t0 > 0, gamma > 1 and t_max >= t0")
    count = int(math.floor(math.log(t_max / t0) / math.log(gamma) + 1e-9)) + 1
    times = [float(f"{t0 * gamma ** k:.12g}") for k in range(count)]
    if include_zero:
        times.insert(0, 0.0)
    return np.asarray(times)
