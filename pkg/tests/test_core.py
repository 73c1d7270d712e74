import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from radialvp.core import (DistributionSpec, Ensemble, ModelKind, RadialState, quartic_bump,
                           richardson_ratios, sample_ensemble, total_mass)

INDICATOR_MASS = 8 * math.pi * (math.sqrt(2) - 1)


def indicator(res):
    return DistributionSpec("custom-grid", (1, 2), (-1, 1), (1, 2), res, values=1.0)


def bump(res):
    return DistributionSpec("box-bump", (1, 2), (-0.5, 0.5), (0.5, 1), res)


def bump_mass_exact():
    # each bump factor integrates to 8L/15; the ell factor carries ell**-0.5
    ell_part, _ = integrate.quad(lambda l: quartic_bump(l, 0.5, 1.0) / math.sqrt(l), 0.5, 1.0,
                                 epsabs=1e-14, epsrel=1e-14)
    return 2 * math.pi * (8 / 15) * (8 / 15) * ell_part


def test_model_kind_aliases():
    assert ModelKind.parse("vp") is ModelKind.CLASSICAL
    assert ModelKind.parse("RVP") is ModelKind.RELATIVISTIC
    assert ModelKind.parse(ModelKind.CLASSICAL) is ModelKind.CLASSICAL
    with pytest.raises(ValueError):
        ModelKind.parse("newtonian")


def test_zero_profile_gives_empty_ensemble():
    spec = DistributionSpec("custom-grid", (1, 2), (-1, 1), (1, 2), (4, 4, 4), values=0.0)
    ens = sample_ensemble(spec)
    assert len(ens) == 0
    assert total_mass(ens) == 0.0


def test_total_mass_small_cases():
    assert total_mass(Ensemble([], [], [], [])) == 0.0
    ens = Ensemble.from_states([RadialState(1, 0, 1, m) for m in (1.0, 2.0, 3.0)])
    assert total_mass(ens) == 6.0


def test_indicator_mass_at_64_cubed_within_one_percent():
    m = total_mass(sample_ensemble(indicator((64, 64, 64))))
    assert abs(m - INDICATOR_MASS) / INDICATOR_MASS < 1e-2


def test_indicator_converges_at_second_order():
    # only the ell**-0.5 factor varies, so the midpoint error is O(h**2) with ratio 4
    errs = [abs(total_mass(sample_ensemble(indicator((1, 1, n)))) - INDICATOR_MASS) for n in (8, 16, 32)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


def test_bump_converges_against_quadrature():
    exact = bump_mass_exact()
    errs = [abs(total_mass(sample_ensemble(bump((n, n, n)))) - exact) for n in (8, 16, 32)]
    # at least second order; bumps with vanishing end slopes do better
    assert errs[0] / errs[1] > 4.0
    assert errs[1] / errs[2] > 4.0
    assert errs[2] / exact < 1e-5


def test_richardson_ratios_bump_and_indicator():
    _, ratios = richardson_ratios(bump((8, 8, 8)), levels=3)
    assert ratios[0] > 4.0
    _, ratios = richardson_ratios(indicator((2, 2, 8)), levels=3)
    assert ratios[0] == pytest.approx(4.0, rel=0.02)


def test_sampling_is_deterministic_and_inside_box():
    spec = DistributionSpec("tensor-bump", (1, 3), (-1, 1), (0.5, 2), (10, 9, 8),
                            centers=(2.0, 0.0, 1.2), half_widths=(0.8, 0.7, 0.6))
    a, b = sample_ensemble(spec), sample_ensemble(spec)
    for name in ("r", "w", "ell", "mu"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.all((a.r >= 1) & (a.r <= 3) & (a.w >= -1) & (a.w <= 1) & (a.ell >= 0.5) & (a.ell <= 2))
    assert a.ell_min == 0.5 and a.time == 0.0


def test_weights_follow_midpoint_formula():
    spec = DistributionSpec("custom-grid", (1, 2), (0, 1), (1, 3), (2, 1, 2),
                            values=lambda r, w, l: r * (1 + w))
    ens = sample_ensemble(spec)
    vol = 0.5 * 1.0 * 1.0
    expected = 2 * math.pi * ens.r * (1 + ens.w) / np.sqrt(ens.ell) * vol
    np.testing.assert_allclose(ens.mu, expected, rtol=1e-15)


def test_total_mass_normalization():
    spec = DistributionSpec("box-bump", (1, 2), (-0.5, 0.5), (0.5, 1), (6, 6, 6), total_mass=10.0)
    assert total_mass(sample_ensemble(spec)) == pytest.approx(10.0, rel=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(r_range=(0.0, 1.0)), dict(ell_range=(0.0, 1.0)), dict(ell_range=(-1.0, 1.0)),
    dict(resolution=(0, 4, 4)), dict(resolution=(4, 4)), dict(w_range=(1.0, 1.0)),
])
def test_invalid_specs_rejected(kwargs):
    base = dict(kind="box-bump", r_range=(1, 2), w_range=(-1, 1), ell_range=(1, 2), resolution=(4, 4, 4))
    base.update(kwargs)
    with pytest.raises(ValueError):
        DistributionSpec(**base)


def test_ensemble_invariants():
    with pytest.raises(ValueError):
        Ensemble([1.0], [0.0], [0.5], [1.0], ell_min=1.0)
    with pytest.raises(ValueError):
        Ensemble([1.0], [0.0], [1.0], [0.0], ell_min=1.0)
    with pytest.raises(ValueError):
        Ensemble([1.0], [0.0], [1.0], [1.0], ell_min=0.0)
    ens = Ensemble([1.0, 2.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0], ell_min=1.0)
    with pytest.raises(ValueError):
        ens.r[0] = 5.0
    moved = ens.evolved([3.0, 4.0], [1.0, 2.0], 1.5)
    assert moved.mu is ens.mu and moved.ell is ens.ell and moved.time == 1.5


def test_quartic_bump_is_c1():
    x = np.array([0.0, 1.0, 2.0, 0.5])
    np.testing.assert_allclose(quartic_bump(x, 0.0, 2.0), [0.0, 1.0, 0.0, (1 - 0.25) ** 2])
    h = 1e-6
    slope_at_edge = (quartic_bump(h, 0.0, 2.0) - quartic_bump(0.0, 0.0, 2.0)) / h
    assert abs(slope_at_edge) < 1e-5


@settings(max_examples=40, deadline=None)
@given(nr=st.integers(1, 6), nw=st.integers(1, 6), nl=st.integers(1, 6),
       lo=st.floats(0.1, 3.0), width=st.floats(0.1, 3.0))
def test_sampled_weights_positive_and_sum_matches(nr, nw, nl, lo, width):
    spec = DistributionSpec("box-bump", (lo, lo + width), (-1, 1), (lo, lo + width), (nr, nw, nl))
    ens = sample_ensemble(spec)
    assert len(ens) <= nr * nw * nl
    assert np.all(ens.mu > 0)
    assert total_mass(ens) == pytest.approx(float(np.sum(ens.mu)), rel=1e-12)
