import math

import numpy as np
import pytest

from radialvp.core import Ensemble
from radialvp.dynamics import IntegratorConfig
from radialvp.oracle import (CartesianState, CartesianSystem, RingConfig, cartesian_energy, cartesian_field,
                             compare_models, lift_to_rings, measure_radial, oracle_ensemble)


def test_ring_config_validation():
    with pytest.raises(ValueError):
        RingConfig(points_per_ring=4)
    with pytest.raises(ValueError):
        RingConfig(horizon=math.inf)


def test_lift_unit_shell_k4():
    ens = Ensemble([1.0], [0.0], [1.0], [2.0], ell_min=1.0)
    st = lift_to_rings(ens, RingConfig(points_per_ring=8))
    np.testing.assert_allclose(np.hypot(*st.x.T), 1.0, rtol=1e-15)
    np.testing.assert_allclose(np.hypot(*st.v.T), 1.0, rtol=1e-15)
    np.testing.assert_allclose(np.sum(st.x * st.v, axis=1), 0.0, atol=1e-15)
    assert math.fsum(st.weight) == pytest.approx(2.0, rel=1e-15)


def test_lift_round_trip():
    rng = np.random.default_rng(0)
    ens = Ensemble(rng.uniform(0.5, 3, 5), rng.normal(size=5), rng.uniform(0.5, 2, 5), rng.uniform(0.1, 1, 5),
                   ell_min=0.5)
    for sign in (1.0, -1.0):
        st = lift_to_rings(ens, RingConfig(points_per_ring=16, tangential_sign=sign))
        r, w, ell = measure_radial(st)
        np.testing.assert_allclose(r, np.repeat(ens.r, 16), rtol=1e-14)
        np.testing.assert_allclose(w, np.repeat(ens.w, 16), rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(ell, np.repeat(ens.ell, 16), rtol=1e-13)
    assert math.fsum(st.weight) == pytest.approx(float(np.sum(ens.mu)), rel=1e-14)


def ring_state(mass=2 * math.pi, k=256):
    ens = Ensemble([1.0], [0.0], [1.0], [mass], ell_min=1.0)
    return lift_to_rings(ens, RingConfig(points_per_ring=k))


def test_ring_field_follows_shell_theorem():
    st = ring_state()
    outside = cartesian_field(st, [2.0, 0.0])
    assert abs(np.hypot(*outside) - 0.5) < 1e-3
    assert abs(np.hypot(*cartesian_field(st, [0.0, 0.5]))) < 1e-3
    diag = cartesian_field(st, [2 * math.cos(0.3), 2 * math.sin(0.3)])
    assert abs(np.hypot(*diag) - 0.5) < 1e-3


def test_antipodal_points_cancel_at_center():
    st = CartesianState(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros((2, 2)), np.array([1.0, 1.0]),
                        np.array([0, 1]))
    np.testing.assert_allclose(cartesian_field(st, [0.0, 0.0]), [0.0, 0.0], atol=1e-16)


def test_coincident_point_rejected():
    st = ring_state(k=8)
    with pytest.raises(ZeroDivisionError):
        cartesian_field(st, st.x[0])
    assert np.all(np.isfinite(cartesian_field(st, st.x[0], softening=0.1)))


def test_thread_count_does_not_change_forces():
    ens = oracle_ensemble()
    st = lift_to_rings(ens, RingConfig(points_per_ring=32))
    a1 = CartesianSystem(st, "vp", RingConfig(points_per_ring=32, threads=1)).acceleration(st.x)
    a3 = CartesianSystem(st, "vp", RingConfig(points_per_ring=32, threads=3)).acceleration(st.x)
    assert np.array_equal(a1, a3)


def test_single_shell_agrees_to_integrator_noise():
    ens = Ensemble([1.0], [-1.0], [1.0], [1.0], ell_min=1.0)
    for model in ("vp", "rvp"):
        rep = compare_models(ens, model, RingConfig(points_per_ring=16, horizon=5.0, n_samples=10))
        assert rep.max_rel_r < 1e-8 and rep.max_abs_w < 1e-8 and rep.passed


def test_relativistic_four_shells():
    rep = compare_models(oracle_ensemble(), "rvp", RingConfig(points_per_ring=64, horizon=3.0, n_samples=6))
    assert rep.max_rel_r < 1e-3 and rep.max_abs_ell < 1e-3
    assert rep.energy_drift < 1e-6


def test_full_self_interaction_flag_changes_dynamics():
    ens = Ensemble([1.0], [0.0], [1.0], [1.0], ell_min=1.0)
    rep = compare_models(ens, "vp", RingConfig(points_per_ring=16, horizon=2.0, n_samples=4, self_interaction=True))
    assert rep.max_rel_r > 1e-3


def test_blow_up_reported_as_infinite():
    rep = compare_models(oracle_ensemble(), "vp", RingConfig(points_per_ring=8, horizon=10.0),
                         IntegratorConfig(max_steps=1))
    assert math.isinf(rep.max_rel_r) and not rep.passed


def test_cartesian_energy_of_two_rings():
    ens = Ensemble([1.0, 3.0], [0.0, 0.0], [1.0, 1.0], [1.0, 2.0], ell_min=1.0)
    st = lift_to_rings(ens, RingConfig(points_per_ring=512))
    kin = 0.5 * (1.0 * 1.0 + 2.0 * (1 / 9))
    # two coaxial rings interact as -(m1 m2 / 2 pi) ln(outer radius)
    expected = kin - 2.0 / (2 * math.pi) * math.log(3.0)
    assert cartesian_energy(st, "vp") == pytest.approx(expected, rel=1e-10)
