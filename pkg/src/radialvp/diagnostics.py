"""Per-frame observables: energies, norms, support extrema and density."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Ensemble, ModelKind, total_mass
from .field import (MassProfile, build_profile, felt_potential, field_lp_norm, field_sup_norm,
                    potential_at, potential_at_zero)

DEFAULT_P_LIST = (3.0, 4.0)


def kinetic_energy(ens: Ensemble, model: ModelKind) -> float:
    v2 = ens.w * ens.w + ens.ell / (ens.r * ens.r)
    if ModelKind.parse(model) is ModelKind.CLASSICAL:
        return 0.5 * math.fsum((ens.mu * v2).tolist())
    return math.fsum((ens.mu * np.sqrt(1.0 + v2)).tolist())


def potential_energy(ens: Ensemble, profile: Optional[MassProfile] = None, include_self: bool = True) -> float:
    """``(1/2) sum_i mu_i U(r_i)``.

    ``include_self=True`` is the continuum functional applied to the atomic
    ensemble, each shell's own ring included. ``include_self=False`` drops the
    ``-(1/4pi) mu_i**2 ln r_i`` self terms, leaving the pair interaction energy
    that the self-excluding shell dynamics conserves together with the
    kinetic energy.
    """
    if len(ens) == 0:
        return 0.0
    profile = profile or build_profile(ens)
    if include_self:
        u = potential_at(profile, ens.r)
    else:
        u = felt_potential(profile, ens.r, ens.mu)
    return 0.5 * math.fsum((ens.mu * u).tolist())


def support_extrema(ens: Ensemble) -> tuple[float, float, float]:
    """``(max r, max |w|, min r)`` over the shells."""
    if len(ens) == 0:
        raise ValueError("support extrema of an empty ensemble are undefined")
    return float(np.max(ens.r)), float(np.max(np.abs(ens.w))), float(np.min(ens.r))


def potential_sup_norm(profile: MassProfile, r_window: Optional[float] = None) -> float:
    """``sup |U(r)|`` over ``0 < r <= r_window`` (default: the outermost shell).

    ``U`` is continuous and non-increasing, so the supremum of ``|U|`` on the
    window sits among the candidates ``r -> 0+``, the shell radii inside the
    window, and the window edge. The potential diverges like ``-ln r`` at
    infinity, so some finite window is required.
    """
    if len(profile) == 0:
        return 0.0
    edge = float(profile.radii[-1]) if r_window is None else float(r_window)
    if edge <= 0.0:
        raise ValueError("r_window must be positive")
    inside = profile.radii[profile.radii <= edge]
    candidates = np.concatenate((inside, [edge]))
    vals = np.abs(potential_at(profile, candidates))
    return float(max(np.max(vals), abs(potential_at_zero(profile))))


@dataclass
class DensityProfile:
    edges: np.ndarray
    density: np.ndarray   # annulus averages, one per bin
    sup: float
    counts: np.ndarray


def _annulus_average(r: np.ndarray, mu: np.ndarray, edges: np.ndarray):
    # half-open bins [a, b) except the last, which is closed
    idx = np.searchsorted(edges, r, side="right") - 1
    idx = np.where(r == edges[-1], edges.size - 2, idx)
    nb = edges.size - 1
    mass = np.bincount(idx, weights=mu, minlength=nb)
    counts = np.bincount(idx, minlength=nb)
    area = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    return mass / area, counts


def density_profile(ens: Ensemble, bins: Optional[Sequence[float]] = None,
                    refine_tol: float = 0.05, min_shells: int = 16, max_refine: int = 12) -> DensityProfile:
    """Annulus-averaged charge density and its supremum estimate.

    The density on ``[a, b)`` is the shell mass inside divided by the annulus
    area ``pi (b**2 - a**2)``, so summing density times area returns the total
    mass. Given explicit ``bins`` no refinement is done. The default
    partition uses equal widths ``r_max / sqrt(N)`` starting at the innermost
    shell, then repeatedly halves the densest bin while the supremum moves by
    more than ``refine_tol`` and the bin still holds ``min_shells`` shells.
    """
    r = ens.r
    if bins is not None:
        edges = np.asarray(bins, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bins must be a strictly increasing sequence of at least two edges")
        if len(ens) and (np.min(r) < edges[0] or np.max(r) > edges[-1]):
            raise ValueError("bins do not cover every shell")
        dens, counts = _annulus_average(r, ens.mu, edges)
        return DensityProfile(edges, dens, float(np.max(dens)) if dens.size else 0.0, counts)
    if len(ens) == 0:
        edges = np.array([0.0, 1.0])
        return DensityProfile(edges, np.zeros(1), 0.0, np.zeros(1, dtype=int))
    r_max, r_min = float(np.max(r)), float(np.min(r))
    width = r_max / math.sqrt(len(ens))
    nb = max(1, int(math.ceil((r_max - r_min) / width)))
    edges = r_min + width * np.arange(nb + 1)
    edges[-1] = max(edges[-1], r_max)
    dens, counts = _annulus_average(r, ens.mu, edges)
    sup = float(np.max(dens))
    for _ in range(max_refine):
        k = int(np.argmax(dens))
        if counts[k] < 2 * min_shells:
            break
        edges_new = np.insert(edges, k + 1, 0.5 * (edges[k] + edges[k + 1]))
        dens_new, counts_new = _annulus_average(r, ens.mu, edges_new)
        sup_new = float(np.max(dens_new))
        k_new = int(np.argmax(dens_new))
        if counts_new[k_new] < min_shells:
            break
        edges, dens, counts = edges_new, dens_new, counts_new
        converged = abs(sup_new - sup) <= refine_tol * sup
        sup = sup_new
        if converged:
            break
    return DensityProfile(edges, dens, sup, counts)


@dataclass(frozen=True)
class DiagnosticsFrame:
    t: float
    kinetic: float
    potential: float
    total_energy: float
    mass: float
    r_max: float
    w_max: float
    r_min: float
    E_sup: float
    E_p: tuple          # ((p, ||E||_p), ...)
    U_sup: float
    rho_sup: float

    def E_p_value(self, p: float) -> float:
        if math.isinf(p):
            return self.E_sup
        for q, val in self.E_p:
            if q == p:
                return val
        raise KeyError(f"no L^{p} norm recorded in this frame")


@dataclass
class TimeSeries:
    model: ModelKind
    frames: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, frame: DiagnosticsFrame):
        if self.frames and not frame.t > self.frames[-1].t:
            raise ValueError("frame times must be strictly increasing")
        self.frames.append(frame)

    def __len__(self):
        return len(self.frames)

    @property
    def p_list(self) -> tuple:
        return tuple(p for p, _ in self.frames[0].E_p) if self.frames else ()

    def column(self, name: str) -> np.ndarray:
        if name.startswith("E_p_"):
            p = float(name[4:])
            return np.array([f.E_p_value(p) for f in self.frames])
        return np.array([getattr(f, name) for f in self.frames], dtype=np.float64)


def compute_frame(ens: Ensemble, model: ModelKind, p_list: Sequence[float] = DEFAULT_P_LIST,
                  refine_tol: float = 0.05) -> DiagnosticsFrame:
    """All observables of one ensemble snapshot.

    The potential energy is the pair interaction energy (see
    :func:`potential_energy`), so ``total_energy`` is the quantity the
    discrete dynamics conserves.
    """
    profile = build_profile(ens)
    kin = kinetic_energy(ens, model)
    pot = potential_energy(ens, profile, include_self=False)
    if len(ens):
        r_max, w_max, r_min = support_extrema(ens)
        e_sup = field_sup_norm(profile)
        e_p = tuple((float(p), field_lp_norm(profile, p)) for p in p_list)
        u_sup = potential_sup_norm(profile)
        rho = density_profile(ens, refine_tol=refine_tol).sup
    else:
        r_max = w_max = r_min = e_sup = u_sup = rho = 0.0
        e_p = tuple((float(p), 0.0) for p in p_list)
    return DiagnosticsFrame(float(ens.time), kin, pot, kin + pot, total_mass(ens), r_max, w_max, r_min,
                            e_sup, e_p, u_sup, rho)


def frame_observer(p_list: Sequence[float] = DEFAULT_P_LIST, refine_tol: float = 0.05):
    """Observer callback for :func:`radialvp.dynamics.integrate` with custom options."""
    p_list = tuple(float(p) for p in p_list)

    def observe(ens: Ensemble, model: ModelKind) -> DiagnosticsFrame:
        return compute_frame(ens, model, p_list, refine_tol)

    return observe
