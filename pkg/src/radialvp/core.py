"""Domain types and deterministic sampling of radial initial data.

A radially symmetric distribution in the plane is described by the radius
``r``, the radial momentum ``w`` and the squared angular momentum ``ell``.
The phase-space measure in these variables is ``2*pi * f * ell**-0.5
dell dw dr``; a midpoint rule on a tensor grid turns it into a finite set of
weighted shells.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi


class ModelKind(str, enum.Enum):
    """Which characteristic system drives the shells."""

    CLASSICAL = "classical"
    RELATIVISTIC = "relativistic"

    @classmethod
    def parse(cls, value: Union[str, "ModelKind"]) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"vp": cls.CLASSICAL, "rvp": cls.RELATIVISTIC}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown model kind {value!r}; expected 'classical' or 'relativistic'") from None


@dataclass(frozen=True)
class RadialState:
    """One computational shell."""

    r: float
    w: float
    ell: float
    mu: float


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted shell population at one instant.

    Stored as parallel read-only arrays; ``ell`` and ``mu`` never change
    along the flow, so :meth:`evolved` shares them with the parent.
    """

    r: np.ndarray
    w: np.ndarray
    ell: np.ndarray
    mu: np.ndarray
    time: float = 0.0
    ell_min: float = 0.0

    def __post_init__(self):
        for name in ("r", "w", "ell", "mu"):
            arr = getattr(self, name)
            if not (isinstance(arr, np.ndarray) and not arr.flags.writeable and arr.dtype == np.float64):
                object.__setattr__(self, name, _frozen(arr))
        n = self.r.size
        if not (self.w.size == self.ell.size == self.mu.size == n):
            raise ValueError("shell arrays must have equal length")
        if n:
            if self.ell_min <= 0.0:
                raise ValueError("ell_min must be positive (every shell needs angular momentum)")
            if np.any(self.ell < self.ell_min):
                raise ValueError("a shell has ell below ell_min")
            if np.any(self.mu <= 0.0):
                raise ValueError("shell weights must be positive")

    @classmethod
    def from_states(cls, states: Sequence[RadialState], time: float = 0.0,
                    ell_min: Optional[float] = None) -> "Ensemble":
        r = [s.r for s in states]
        w = [s.w for s in states]
        ell = [s.ell for s in states]
        mu = [s.mu for s in states]
        if ell_min is None:
            ell_min = min(ell) if ell else 0.0
        return cls(r, w, ell, mu, time=float(time), ell_min=float(ell_min))

    def __len__(self) -> int:
        return int(self.r.size)

    @property
    def shells(self) -> list[RadialState]:
        return list(self)

    def __iter__(self) -> Iterator[RadialState]:
        for i in range(len(self)):
            yield RadialState(float(self.r[i]), float(self.w[i]), float(self.ell[i]), float(self.mu[i]))

    def evolved(self, r, w, time: float) -> "Ensemble":
        """New ensemble with updated phase coordinates and the same weights."""
        return Ensemble(r, w, self.ell, self.mu, time=float(time), ell_min=self.ell_min)


def total_mass(ens: Ensemble) -> float:
    """Sum of shell weights with exactly rounded summation."""
    return math.fsum(ens.mu.tolist())


# --- initial distributions -------------------------------------------------

DISTRIBUTION_KINDS = ("box-bump", "tensor-bump", "custom-grid")


def quartic_bump(x, lo: float, hi: float) -> np.ndarray:
    """C^1 bump ``(1 - s**2)**2`` mapped onto ``[lo, hi]``; zero outside."""
    x = np.asarray(x, dtype=np.float64)
    s = (2.0 * x - lo - hi) / (hi - lo)
    return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 2, 0.0)


Interval = tuple[float, float]
GridValues = Union[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], np.ndarray, float]


@dataclass(frozen=True)
class DistributionSpec:
    """Compactly supported initial datum ``f0(r, w, ell)`` on a box.

    kind
        ``box-bump``: product of quartic bumps each spanning its full box
        interval. ``tensor-bump``: product of quartic bumps with per-axis
        ``centers`` and ``half_widths`` (clipped to the box).
        ``custom-grid``: ``values`` is a constant, a callable ``f(r, w, ell)``
        or an array of shape ``resolution`` holding cell-midpoint values.
    total_mass
        If given, the amplitude is rescaled so the sampled ensemble carries
        exactly this mass.
    """

    kind: str
    r_range: Interval
    w_range: Interval
    ell_range: Interval
    resolution: tuple[int, int, int]
    amplitude: float = 1.0
    total_mass: Optional[float] = None
    centers: Optional[tuple[float, float, float]] = None
    half_widths: Optional[tuple[float, float, float]] = None
    values: GridValues = field(default=1.0, compare=False)

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {DISTRIBUTION_KINDS}")
        for name in ("r_range", "w_range", "ell_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite interval with lo < hi, got {(lo, hi)}")
        if self.r_range[0] <= 0.0:
            raise ValueError("r_range must start at r0 > 0 (shells may not sit at the origin)")
        if self.ell_range[0] <= 0.0:
            raise ValueError("ell_range must start at ell0 > 0 (positive angular momentum required)")
        res = tuple(int(n) for n in self.resolution)
        if len(res) != 3 or min(res) < 1:
            raise ValueError(f"resolution must be three positive integers, got {self.resolution}")
        object.__setattr__(self, "resolution", res)
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")
        if self.total_mass is not None and not self.total_mass > 0.0:
            raise ValueError("total_mass must be positive when given")
        if self.kind == "tensor-bump":
            if self.centers is None or self.half_widths is None:
                raise ValueError("tensor-bump needs centers and half_widths")
            if min(self.half_widths) <= 0.0:
                raise ValueError("half_widths must be positive")

    @property
    def box(self) -> tuple[Interval, Interval, Interval]:
        return (self.r_range, self.w_range, self.ell_range)

    def grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Cell midpoints along each axis and the cell volume."""
        axes = []
        vol = 1.0
        for (lo, hi), n in zip(self.box, self.resolution):
            edges = np.linspace(lo, hi, n + 1)
            axes.append(0.5 * (edges[1:] + edges[:-1]))
            vol *= (hi - lo) / n
        return axes[0], axes[1], axes[2], vol

    def profile(self, r, w, ell) -> np.ndarray:
        """Unnormalized ``f0`` (amplitude applied) at the given points."""
        r, w, ell = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (r, w, ell)))
        inside = ((r >= self.r_range[0]) & (r <= self.r_range[1])
                  & (w >= self.w_range[0]) & (w <= self.w_range[1])
                  & (ell >= self.ell_range[0]) & (ell <= self.ell_range[1]))
        if self.kind == "box-bump":
            f = (quartic_bump(r, *self.r_range) * quartic_bump(w, *self.w_range)
                 * quartic_bump(ell, *self.ell_range))
        elif self.kind == "tensor-bump":
            f = np.ones(r.shape)
            for x, c, h in zip((r, w, ell), self.centers, self.half_widths):
                f = f * quartic_bump(x, c - h, c + h)
        else:
            vals = self.values
            if callable(vals):
                f = np.asarray(vals(r, w, ell), dtype=np.float64)
            elif np.ndim(vals) == 0:
                f = np.full(r.shape, float(vals))
            else:
                raise ValueError("array-valued custom-grid data can only be sampled on its own grid")
        f = self.amplitude * np.where(inside, f, 0.0)
        if np.any(f < 0.0):
            raise ValueError("f0 must be nonnegative")
        return f


def _grid_values(spec: DistributionSpec, R, W, L) -> np.ndarray:
    if spec.kind == "custom-grid" and not callable(spec.values) and np.ndim(spec.values) > 0:
        vals = np.asarray(spec.values, dtype=np.float64)
        if vals.shape != spec.resolution:
            raise ValueError(f"custom-grid values have shape {vals.shape}, expected {spec.resolution}")
        if np.any(vals < 0.0):
            raise ValueError("f0 must be nonnegative")
        return spec.amplitude * vals
    return spec.profile(R, W, L)


def sample_ensemble(spec: DistributionSpec) -> Ensemble:
    """Midpoint-rule discretization of ``f0`` into a weighted shell ensemble.

    One shell per occupied cell, placed at the cell midpoint with weight
    ``2*pi * f0 * ell**-0.5 * dr*dw*dell``. Shells are emitted in C order over
    ``(r, w, ell)`` cells, so identical specs give bit-identical ensembles.
    """
    rs, ws, ls, vol = spec.grid()
    R, W, L = np.meshgrid(rs, ws, ls, indexing="ij")
    f = _grid_values(spec, R, W, L)
    occupied = (f > 0.0).reshape(-1)
    mu = (TWO_PI * vol) * f.reshape(-1)[occupied] / np.sqrt(L.reshape(-1)[occupied])
    if spec.total_mass is not None and mu.size:
        mu = mu * (spec.total_mass / math.fsum(mu.tolist()))
    return Ensemble(R.reshape(-1)[occupied], W.reshape(-1)[occupied], L.reshape(-1)[occupied], mu,
                    time=0.0, ell_min=spec.ell_range[0])


def richardson_ratios(spec: DistributionSpec, levels: int = 3) -> tuple[list[float], list[float]]:
    """Sampled masses under repeated grid halving and successive-difference ratios.

    A ratio near ``2**k`` indicates order-``k`` convergence of the midpoint rule.
    """
    if spec.kind == "custom-grid" and not callable(spec.values) and np.ndim(spec.values) > 0:
        raise ValueError("grid refinement needs a profile that can be evaluated anywhere")
    masses = []
    for k in range(levels):
        res = tuple(n * 2 ** k for n in spec.resolution)
        sub = DistributionSpec(spec.kind, spec.r_range, spec.w_range, spec.ell_range, res,
                               amplitude=spec.amplitude, centers=spec.centers,
                               half_widths=spec.half_widths, values=spec.values)
        masses.append(total_mass(sample_ensemble(sub)))
    ratios = []
    for k in range(levels - 2):
        d1 = masses[k] - masses[k + 1]
        d2 = masses[k + 1] - masses[k + 2]
        ratios.append(d1 / d2 if d2 != 0.0 else math.inf)
    return masses, ratios
