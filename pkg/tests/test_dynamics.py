import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from radialvp.core import DistributionSpec, Ensemble, ModelKind, RadialState, sample_ensemble
from radialvp.dynamics import (DormandPrince, IntegratorConfig, RadialSystem, StepSizeUnderflow, Trajectory,
                               geometric_schedule, integrate, rhs_classical, rhs_relativistic, step_ensemble,
                               turn_around_time)

TIGHT = IntegratorConfig(rtol=1e-12, atol=1e-14)


def lone(r, w, ell, mu=1.0):
    return Ensemble([r], [w], [ell], [mu], ell_min=ell)


def test_rhs_examples():
    assert rhs_classical(RadialState(1, 0, 1, 1), 0.0) == (0.0, 1.0)
    assert rhs_classical(RadialState(1, 0, 1, 1), 2 * math.pi) == (0.0, 2.0)
    dr, dw = rhs_relativistic(RadialState(1, 0, 1, 1), 0.0)
    assert dr == 0.0 and dw == pytest.approx(1 / math.sqrt(2), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(r=st.floats(1e-3, 1e3), w=st.floats(-1e3, 1e3), ell=st.floats(1e-3, 1e3), m=st.floats(0, 1e3))
def test_rhs_sign_and_speed_properties(r, w, ell, m):
    s = RadialState(r, w, ell, 1.0)
    assert rhs_classical(s, m)[1] > 0
    dr, dw = rhs_relativistic(s, m)
    assert abs(dr) < 1.0 and dw > 0


def test_vectorized_rhs_matches_scalar():
    rng = np.random.default_rng(0)
    ens = Ensemble(rng.uniform(0.5, 3, 20), rng.normal(size=20), rng.uniform(0.5, 2, 20),
                   rng.uniform(0.1, 1, 20), ell_min=0.5)
    from radialvp.field import build_profile
    felt = build_profile(ens).felt
    for model, scalar in ((ModelKind.CLASSICAL, rhs_classical), (ModelKind.RELATIVISTIC, rhs_relativistic)):
        f = RadialSystem(ens.ell, ens.mu, model)(0.0, np.concatenate((ens.r, ens.w)))
        for i, s in enumerate(ens):
            dr, dw = scalar(s, felt[i])
            assert f[i] == pytest.approx(dr, rel=1e-14)
            assert f[20 + i] == pytest.approx(dw, rel=1e-14)


def test_lone_shell_outgoing_closed_form():
    res = integrate(lone(1.0, 0.0, 1.0), "vp", TIGHT, np.linspace(1, 100, 100), record="all")
    t, r, _ = res.trajectories[0].arrays()
    np.testing.assert_allclose(r ** 2, 1 + t ** 2, rtol=1e-8)
    assert res.trajectories[0].turnaround == 0.0


def test_lone_shell_incoming_closed_form_and_turnaround():
    res = integrate(lone(1.0, -1.0, 1.0), "vp", TIGHT, np.linspace(0.01, 100, 300), record="all")
    tr = res.trajectories[0]
    t, r, _ = tr.arrays()
    exact = 1 - 2 * t + 2 * t * t
    assert np.max(np.abs(r ** 2 - exact) / exact) < 1e-8
    assert abs(turn_around_time(tr) - 0.5) < 1e-6
    assert turn_around_time(tr) <= 1.0


def test_lone_relativistic_shell_turnaround():
    # gamma is conserved for a lone shell, so time is the classical one slowed by sqrt(3)
    res = integrate(lone(1.0, -1.0, 1.0), "rvp", TIGHT, np.linspace(0.01, 50, 200), record="all")
    tr = res.trajectories[0]
    t, r, _ = tr.arrays()
    s = t / math.sqrt(3)
    np.testing.assert_allclose(r ** 2, 1 - 2 * s + 2 * s * s, rtol=1e-8)
    T = turn_around_time(tr)
    assert T == pytest.approx(math.sqrt(3) / 2, abs=1e-6)
    assert T <= math.sqrt(3)


def test_turnaround_without_crossing():
    assert turn_around_time(Trajectory(0, 1.0, [0.0], [1.0], [0.5])) == 0.0
    assert turn_around_time(Trajectory(0, 1.0, [0.0, 1.0], [1.0, 0.9], [-1.0, -0.5])) is None


def test_reversibility():
    grid = sample_ensemble(DistributionSpec("box-bump", (1, 2), (-0.5, 0.5), (0.5, 1), (4, 4, 4), total_mass=2.0))
    for model in ("vp", "rvp"):
        # start after the exact radius ties of the grid have split; shells still cross afterwards
        ens = step_ensemble(grid, 0.5, model, TIGHT)
        ens = ens.evolved(ens.r, ens.w, 0.0)
        fwd = step_ensemble(ens, 5.0, model, TIGHT)
        back = step_ensemble(fwd.evolved(fwd.r, -fwd.w, 0.0), 5.0, model, TIGHT)
        np.testing.assert_allclose(back.r, ens.r, atol=1e-6)
        np.testing.assert_allclose(-back.w, ens.w, atol=1e-6)


def test_step_ensemble_backward_time():
    ens = lone(1.0, 0.0, 1.0)
    fwd = step_ensemble(ens, 3.0, "vp", TIGHT)
    assert fwd.time == 3.0
    back = step_ensemble(fwd, -3.0, "vp", TIGHT)
    assert back.time == 0.0
    assert back.r[0] == pytest.approx(1.0, abs=1e-9)


def harmonic(t, y):
    return np.array([y[1], -y[0]])


def test_dormand_prince_against_exact_and_scipy():
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-12)
    dp = DormandPrince(harmonic, 0.0, [1.0, 0.0], cfg)
    while dp.t < 20.0:
        seg = dp.step(h_max=20.0 - dp.t)
        mid = seg.t0 + 0.37 * seg.h
        np.testing.assert_allclose(seg(mid), [math.cos(mid), -math.sin(mid)], atol=1e-8)
        np.testing.assert_allclose(seg(seg.t0 + seg.h), dp.y, atol=1e-15)
    np.testing.assert_allclose(dp.y, [math.cos(20.0), -math.sin(20.0)], atol=1e-8)
    ref = solve_ivp(harmonic, (0, 20), [1.0, 0.0], method="RK45", rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(dp.y, ref.y[:, -1], atol=1e-8)


def test_dense_output_matches_scipy_interpolant():
    # same tableau and continuous extension: identical first step gives identical interpolant
    f = lambda t, y: np.array([y[1], -y[0] + 0.1 * t])
    h = 0.3
    dp = DormandPrince(f, 0.0, [1.0, 0.5], IntegratorConfig(rtol=1e-3, atol=1e-3, initial_step=h))
    seg = dp.step()
    assert seg.h == h
    ref = solve_ivp(f, (0, h), [1.0, 0.5], method="RK45", first_step=h, max_step=h, rtol=1e-3, atol=1e-3,
                    dense_output=True)
    for th in (0.1, 0.5, 0.9):
        np.testing.assert_allclose(seg(th * h), ref.sol(th * h), rtol=1e-13, atol=1e-14)


def test_step_size_underflow_is_raised():
    bad = lambda t, y: np.full_like(y, np.nan) if t > 0 else np.ones_like(y)
    dp = DormandPrince(bad, 0.0, [1.0], IntegratorConfig(initial_step=0.1))
    with pytest.raises(StepSizeUnderflow):
        dp.step()


def test_schedule_validation_and_zero_duration():
    ens = lone(1.0, 0.0, 1.0)
    res = integrate(ens, "vp", TIGHT, [])
    assert len(res.series) == 1 and res.series.frames[0].t == 0.0
    with pytest.raises(ValueError):
        integrate(ens, "vp", TIGHT, [1.0, 1.0])
    with pytest.raises(ValueError):
        integrate(ens, "vp", TIGHT, [2.0, 1.0])


def test_geometric_schedule():
    t = geometric_schedule(1.0, 10 ** 0.125, 1e6)
    assert t[0] == 1.0 and t[-1] == 1e6 and t.size == 49
    np.testing.assert_allclose(np.diff(np.log10(t)), 0.125, atol=1e-11)


def test_energy_conservation_thousand_shells():
    spec = DistributionSpec("box-bump", (1, 2), (-0.5, 0.5), (0.5, 1), (10, 10, 10), total_mass=10.0)
    ens = sample_ensemble(spec)
    res = integrate(ens, "vp", IntegratorConfig(), geometric_schedule(1.0, 10 ** 0.25, 1e4))
    e = res.series.column("total_energy")
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-5
    mass = res.series.column("mass")
    assert np.all(mass == mass[0])


def test_ell_and_mu_untouched_and_convexity():
    spec = DistributionSpec("box-bump", (1, 2), (-0.5, 0.5), (0.5, 1), (4, 4, 4), total_mass=5.0)
    ens = sample_ensemble(spec)
    times = np.linspace(0.05, 20.0, 400)
    res = integrate(ens, "vp", TIGHT, times, record="all")
    assert res.ensemble.ell is ens.ell and res.ensemble.mu is ens.mu
    dt = times[1] - times[0]
    for tr in res.trajectories:
        t, r, w = tr.arrays()
        t, r, w = t[1:], r[1:], w[1:]
        assert np.all(np.diff(w) > 0)
        # d^2(R^2)/dt^2 >= 2 (W^2 + ell R^-2), up to the O(dt^2) finite-difference error
        second = (r[2:] ** 2 - 2 * r[1:-1] ** 2 + r[:-2] ** 2) / dt ** 2
        lower = 2 * (w[1:-1] ** 2 + tr.ell / r[1:-1] ** 2)
        assert np.all(second >= lower - 1e-3 * (1 + lower))
