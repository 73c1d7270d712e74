"""Brute-force Cartesian check of the radial reduction.

Each shell is replaced by a ring of ``K`` point charges in the plane moving
under the raw pairwise log-kernel field. Measuring ``|x|``, ``x.v/|x|`` and
``|x ^ v|**2`` on the ring points recovers ``(r, w, ell)``, which is compared
against the radial integration of the same ensemble.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TWO_PI, Ensemble, ModelKind
from .dynamics import DormandPrince, IntegratorConfig, integrate


@dataclass(frozen=True)
class RingConfig:
    points_per_ring: int = 256
    softening: float = 0.0
    horizon: float = 10.0
    tolerance: float = 1e-3
    n_samples: int = 40
    tangential_sign: float = 1.0
    self_interaction: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.points_per_ring < 8:
            raise ValueError("need at least 8 points per ring")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be finite and positive")
        if self.softening < 0:
            raise ValueError("softening must be nonnegative")
        if self.tangential_sign not in (1.0, -1.0, 1, -1):
            raise ValueError("tangential_sign must be +1 or -1")


@dataclass(frozen=True, eq=False)
class CartesianState:
    x: np.ndarray        # (M, 2)
    v: np.ndarray        # (M, 2)
    weight: np.ndarray   # (M,)
    ring: np.ndarray     # (M,) source shell index of each point


def lift_to_rings(ens: Ensemble, cfg: RingConfig = RingConfig()) -> CartesianState:
    """Replace every shell by ``K`` equally spaced points of weight ``mu/K``.

    Each point carries radial momentum ``w`` and tangential momentum
    ``sign * sqrt(ell)/r``, so ``w**2 + ell/r**2 = |v|**2``.
    """
    K = cfg.points_per_ring
    n = len(ens)
    theta = TWO_PI * np.arange(K) / K
    c, s = np.cos(theta), np.sin(theta)
    r = np.repeat(ens.r, K)
    w = np.repeat(ens.w, K)
    vt = cfg.tangential_sign * np.sqrt(np.repeat(ens.ell, K)) / r
    cc = np.tile(c, n)
    ss = np.tile(s, n)
    x = np.column_stack((r * cc, r * ss))
    v = np.column_stack((w * cc - vt * ss, w * ss + vt * cc))
    weight = np.repeat(ens.mu / K, K)
    return CartesianState(x, v, weight, np.repeat(np.arange(n), K))


def measure_radial(state: CartesianState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-point ``(r, w, ell)`` from Cartesian positions and momenta."""
    x, v = state.x, state.v
    r = np.hypot(x[:, 0], x[:, 1])
    w = (x[:, 0] * v[:, 0] + x[:, 1] * v[:, 1]) / r
    cross = x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]
    return r, w, cross * cross


def _pair_field(targets: np.ndarray, sources: np.ndarray, weight: np.ndarray, eps: float,
                mask: Optional[np.ndarray] = None) -> np.ndarray:
    d = targets[:, None, :] - sources[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", d, d) + eps * eps
    if mask is None and np.any(d2 == 0.0):
        raise ZeroDivisionError("field evaluated on top of a source point with zero softening")
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = weight[None, :] / d2
    if mask is not None:
        coef = np.where(mask, 0.0, coef)
    return np.einsum("ij,ijk->ik", coef, d) / TWO_PI


def cartesian_field(state: CartesianState, at, softening: float = 0.0,
                    exclude_ring: Optional[int] = None) -> np.ndarray:
    """Field ``sum_y weight (x - y) / (2 pi |x - y|**2)`` at plane point(s) ``at``."""
    pts = np.atleast_2d(np.asarray(at, dtype=np.float64))
    src, wt = state.x, state.weight
    if exclude_ring is not None:
        keep = state.ring != exclude_ring
        src, wt = src[keep], wt[keep]
    out = _pair_field(pts, src, wt, softening)
    return out[0] if np.ndim(at) == 1 else out


class CartesianSystem:
    """Pairwise dynamics of all ring points; state ``[x(M,2), v(M,2)]`` flattened."""

    def __init__(self, state: CartesianState, model: ModelKind, cfg: RingConfig):
        self.weight = state.weight
        self.model = ModelKind.parse(model)
        self.eps = cfg.softening
        self.m = state.weight.size
        same = state.ring[:, None] == state.ring[None, :]
        self.mask = same if not cfg.self_interaction else np.eye(self.m, dtype=bool)
        self.threads = max(1, int(cfg.threads))

    def acceleration(self, x: np.ndarray) -> np.ndarray:
        if self.threads == 1:
            return _pair_field(x, x, self.weight, self.eps, self.mask)
        chunks = np.array_split(np.arange(self.m), self.threads)
        with ThreadPoolExecutor(self.threads) as pool:
            parts = list(pool.map(lambda idx: _pair_field(x[idx], x, self.weight, self.eps, self.mask[idx]),
                                  chunks))
        return np.concatenate(parts)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        m = self.m
        x = y[:2 * m].reshape(m, 2)
        v = y[2 * m:].reshape(m, 2)
        if self.model is ModelKind.CLASSICAL:
            xdot = v
        else:
            xdot = v / np.sqrt(1.0 + np.einsum("ij,ij->i", v, v))[:, None]
        return np.concatenate((xdot.reshape(-1), self.acceleration(x).reshape(-1)))


def cartesian_energy(state: CartesianState, model: ModelKind, self_interaction: bool = False) -> float:
    """Kinetic plus pairwise log-potential energy of the point system."""
    v2 = np.einsum("ij,ij->i", state.v, state.v)
    if ModelKind.parse(model) is ModelKind.CLASSICAL:
        kin = 0.5 * math.fsum((state.weight * v2).tolist())
    else:
        kin = math.fsum((state.weight * np.sqrt(1.0 + v2)).tolist())
    d = state.x[:, None, :] - state.x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    pair = state.ring[:, None] != state.ring[None, :] if not self_interaction else ~np.eye(dist.shape[0], dtype=bool)
    with np.errstate(divide="ignore"):
        logd = np.where(pair, np.log(np.where(pair, dist, 1.0)), 0.0)
    pot = -0.5 * np.sum(state.weight[:, None] * state.weight[None, :] * logd) / TWO_PI
    return kin + float(pot)


@dataclass
class DeviationReport:
    model: ModelKind
    points_per_ring: int
    times: np.ndarray
    max_rel_r: float
    max_abs_w: float
    max_abs_ell: float
    energy_drift: float
    passed: bool

    def table(self) -> str:
        return "\n".join([
            f"model               {self.model.value}",
            f"points per ring     {self.points_per_ring}",
            f"horizon             {self.times[-1]:.6g}",
            f"max rel r deviation {self.max_rel_r:.3e}",
            f"max abs w deviation {self.max_abs_w:.3e}",
            f"max abs ell drift   {self.max_abs_ell:.3e}",
            f"cartesian energy drift {self.energy_drift:.3e}",
            f"verdict             {'pass' if self.passed else 'fail'}",
        ])


def compare_models(ens: Ensemble, model: ModelKind, cfg: RingConfig = RingConfig(),
                   integrator: IntegratorConfig = IntegratorConfig(rtol=1e-10, atol=1e-12)) -> DeviationReport:
    """Evolve the shell and ring representations side by side and compare.

    Deviations are maxima over sample times and all ring points of the
    relative error in ``r`` and absolute errors in ``w`` and ``ell``. A
    blow-up in either run yields infinite deviations.
    """
    model = ModelKind.parse(model)
    times = np.linspace(0.0, cfg.horizon, cfg.n_samples + 1)[1:] + ens.time
    inf_report = DeviationReport(model, cfg.points_per_ring, times, math.inf, math.inf, math.inf, math.inf, False)
    try:
        radial = integrate(ens, model, integrator, times, record="all")
    except (RuntimeError, FloatingPointError, ValueError):
        return inf_report
    ref_r = np.array([tr.r for tr in radial.trajectories])      # (n, T+1) incl. initial sample
    ref_w = np.array([tr.w for tr in radial.trajectories])

    state0 = lift_to_rings(ens, cfg)
    system = CartesianSystem(state0, model, cfg)
    m = state0.weight.size
    y0 = np.concatenate((state0.x.reshape(-1), state0.v.reshape(-1)))
    e0 = cartesian_energy(state0, model, cfg.self_interaction)
    ell0 = np.repeat(ens.ell, cfg.points_per_ring)
    solver = DormandPrince(system, ens.time, y0, integrator)
    dev_r = dev_w = dev_l = drift = 0.0
    try:
        for k, t_out in enumerate(times):
            while solver.t < t_out:
                solver.step()
            y = solver.y if solver.t == t_out else solver.last(t_out)
            st = CartesianState(y[:2 * m].reshape(m, 2), y[2 * m:].reshape(m, 2), state0.weight, state0.ring)
            r, w, ell = measure_radial(st)
            rr = np.repeat(ref_r[:, k + 1], cfg.points_per_ring)
            ww = np.repeat(ref_w[:, k + 1], cfg.points_per_ring)
            dev_r = max(dev_r, float(np.max(np.abs(r - rr) / rr)))
            dev_w = max(dev_w, float(np.max(np.abs(w - ww))))
            dev_l = max(dev_l, float(np.max(np.abs(ell - ell0))))
            drift = max(drift, abs(cartesian_energy(st, model, cfg.self_interaction) - e0) / max(abs(e0), 1e-300))
    except (RuntimeError, FloatingPointError, ZeroDivisionError):
        return inf_report
    if not all(map(math.isfinite, (dev_r, dev_w, dev_l))):
        return inf_report
    passed = dev_r < cfg.tolerance and dev_l < cfg.tolerance
    return DeviationReport(model, cfg.points_per_ring, times, dev_r, dev_w, dev_l, drift, passed)


def oracle_ensemble(n_shells: int = 4, mass_per_shell: float = 1.0) -> Ensemble:
    """Non-crossing test ensemble: homologous radii, momenta and angular momenta.

    Shell ``i`` starts at ``r = i``, ``w = i/2``, ``ell = i**2/4``; the outer
    shells are faster and feel more mass, so shells never pass each other.
    """
    i = np.arange(1, n_shells + 1, dtype=np.float64)
    return Ensemble(i, 0.5 * i, 0.25 * i * i, np.full(n_shells, mass_per_shell), time=0.0, ell_min=0.25)


def convergence_study(ens: Ensemble, model: ModelKind, ks: Sequence[int] = (8, 16, 32),
                      cfg: RingConfig = RingConfig(),
                      integrator: IntegratorConfig = IntegratorConfig(rtol=1e-10, atol=1e-12)) -> list:
    """Deviation reports for a sequence of ring resolutions."""
    out = []
    for k in ks:
        sub = RingConfig(k, cfg.softening, cfg.horizon, cfg.tolerance, cfg.n_samples, cfg.tangential_sign,
                         cfg.self_interaction, cfg.threads)
        out.append(compare_models(ens, model, sub, integrator))
    return out
