"""Enclosed mass, radial field and potential of an atomic shell ensemble.

For a finite set of shells the 2D Gauss law is exact: the enclosed mass is a
right-continuous step function, the field is ``m(r) / (2*pi*r)`` and the
logarithmic potential reduces to finite sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TWO_PI, Ensemble


def shell_order(r: np.ndarray, ell: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Sort permutation by radius, then ell, then w, then input index."""
    return np.lexsort((w, ell, r))


def felt_mass(r: np.ndarray, mu: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Mass acting on each shell, in input order.

    Mass strictly inside the shell plus half of any other mass sitting at
    the same radius; a shell never feels itself.
    """
    rs = r[order]
    ms = mu[order]
    cum = np.empty(rs.size + 1)
    cum[0] = 0.0
    np.cumsum(ms, out=cum[1:])
    lo = np.searchsorted(rs, rs, side="left")
    hi = np.searchsorted(rs, rs, side="right")
    sorted_felt = cum[lo] + 0.5 * (cum[hi] - cum[lo] - ms)
    out = np.empty_like(sorted_felt)
    out[order] = sorted_felt
    return out


@dataclass(frozen=True, eq=False)
class MassProfile:
    """Sorted radii with prefix sums; evaluates m, E and U for one ensemble.

    ``cum[k]`` is the mass of the ``k`` innermost shells (``cum[0] = 0``,
    ``cum[-1] = total``). ``felt`` is indexed like the source ensemble.
    """

    radii: np.ndarray
    masses: np.ndarray
    cum: np.ndarray
    total: float
    felt: np.ndarray
    order: np.ndarray
    # suffix sums of mu * ln R over sorted shells; log_tail[k] covers shells k..N-1
    log_tail: np.ndarray

    def __len__(self) -> int:
        return int(self.radii.size)


def build_profile(ens: Ensemble) -> MassProfile:
    if len(ens) and not np.all(np.isfinite(ens.r)):
        raise FloatingPointError("non-finite shell radius; the integration has blown up")
    if len(ens) and np.any(ens.r <= 0.0):
        raise ValueError("shell radii must be positive")
    order = shell_order(ens.r, ens.ell, ens.w)
    radii = ens.r[order]
    masses = ens.mu[order]
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    log_tail = np.concatenate((np.cumsum((masses * np.log(radii))[::-1])[::-1], [0.0]))
    total = math.fsum(masses.tolist())
    felt = felt_mass(ens.r, ens.mu, order)
    for a in (radii, masses, cum, felt, log_tail):
        a.flags.writeable = False
    return MassProfile(radii, masses, cum, total, felt, order, log_tail)


def mass_at(p: MassProfile, r):
    """Enclosed mass ``m(r)``: total weight of shells with radius <= r."""
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0.0):
        raise ValueError("radius must be nonnegative")
    out = p.cum[np.searchsorted(p.radii, r_arr, side="right")]
    return float(out) if out.ndim == 0 else out


def _positive(r) -> np.ndarray:
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr <= 0.0):
        raise ValueError("radius must be strictly positive")
    return r_arr


def field_at(p: MassProfile, r, shell: int | None = None):
    """Radial field magnitude ``m(r) / (2*pi*r)``.

    With ``shell`` set (an index into the source ensemble) the value is the
    field that shell feels at its own radius, using its felt mass.
    """
    if shell is not None:
        rad = float(_positive(r))
        return float(p.felt[shell]) / (TWO_PI * rad)
    r_arr = _positive(r)
    out = p.cum[np.searchsorted(p.radii, r_arr, side="right")] / (TWO_PI * r_arr)
    return float(out) if out.ndim == 0 else out


def potential_at(p: MassProfile, r):
    """Potential ``U(r) = -(1/2pi) [sum_{R<r} mu ln r + sum_{R>=r} mu ln R]``."""
    r_arr = _positive(r)
    k = np.searchsorted(p.radii, r_arr, side="left")
    out = -(p.cum[k] * np.log(r_arr) + p.log_tail[k]) / TWO_PI
    return float(out) if out.ndim == 0 else out


def potential_at_zero(p: MassProfile) -> float:
    """Limit of the potential as ``r -> 0+``."""
    return -float(p.log_tail[0]) / TWO_PI


def felt_potential(p: MassProfile, r: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Potential each shell sees from all the others, in input order.

    Its radial derivative is minus the felt field, so it pairs with the
    self-excluding force law.
    """
    return potential_at(p, r) + mu * np.log(r) / TWO_PI


def field_sup_norm(p: MassProfile) -> float:
    """Exact ``sup_r m(r) / (2*pi*r)``.

    Between jumps the field decays like ``1/r``, so the supremum is attained
    at a shell radius.
    """
    if len(p) == 0:
        raise ValueError("empty profile")
    m = p.cum[np.searchsorted(p.radii, p.radii, side="right")]
    return float(np.max(m / (TWO_PI * p.radii)))


def field_lp_norm(p: MassProfile, exponent: float) -> float:
    """Closed-form ``L^p`` norm of the field over the plane, ``p > 2``.

    ``||E||_p^p = (2pi)^(1-p) sum_seg m_seg^p int_a^b q^(1-p) dq`` with the last
    segment running to infinity. ``exponent = inf`` gives the sup norm.
    """
    pexp = float(exponent)
    if math.isinf(pexp) and pexp > 0:
        return field_sup_norm(p)
    if not pexp > 2.0:
        raise ValueError(f"field L^p norm needs p > 2 (the far-field tail is not integrable otherwise), got p={exponent}")
    if len(p) == 0:
        return 0.0
    # distinct jump points; the mass is constant on [R_k, R_{k+1})
    rad, idx = np.unique(p.radii, return_index=True)
    upper = np.append(idx[1:], len(p))
    m = p.cum[upper]
    a = rad ** (2.0 - pexp)
    b = np.append(rad[1:] ** (2.0 - pexp), 0.0)
    terms = m ** pexp * (a - b) / (pexp - 2.0)
    total = (TWO_PI ** (1.0 - pexp)) * math.fsum(terms.tolist())
    return total ** (1.0 / pexp)
