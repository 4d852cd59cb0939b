import math

import numpy as np
import pytest

from cfrl import env
from cfrl.errors import CollisionStateError
from cfrl.idm import IDMParams, IDMPolicy, idm_acceleration, idm_equilibrium_gap

from conftest import build_period

P = IDMParams(a_max=1.0, a_conf=1.5, v_desired=15.0, beta=4.0, s_jam=2.0, t_headway=1.2)


def test_standstill_equilibrium():
    assert idm_acceleration(P, 0.0, 0.0, P.s_jam) == pytest.approx(0.0, abs=1e-15)


def test_free_flow_limit():
    assert abs(idm_acceleration(P, 15.0, 0.0, 1e6)) < 1e-8


def test_hand_evaluated_example():
    # 1 * (1 - (10/15)^4 - (14/14)^2)
    assert idm_acceleration(P, 10.0, 0.0, 14.0) == pytest.approx(-16.0 / 81.0, rel=1e-12)


def test_collision_state_rejected():
    with pytest.raises(CollisionStateError):
        idm_acceleration(P, 5.0, 0.0, 0.0)


def test_output_clamped(rng):
    for _ in range(200):
        v = rng.uniform(0, 40)
        dv = rng.uniform(-20, 20)
        gap = rng.uniform(0.1, 150)
        assert -3.0 <= idm_acceleration(P, v, dv, gap) <= 3.0


def test_rational_driving_constraints(rng):
    # da/dgap >= 0 and da/dv <= 0 on a sampled grid, via central differences
    h = 1e-6
    for _ in range(300):
        v = rng.uniform(0.5, 14.0)
        dv = rng.uniform(-3, 3)
        gap = rng.uniform(3, 80)
        dgap = (idm_acceleration(P, v, dv, gap + h) - idm_acceleration(P, v, dv, gap - h)) / (2 * h)
        dvel = (idm_acceleration(P, v + h, dv, gap) - idm_acceleration(P, v - h, dv, gap)) / (2 * h)
        assert dgap >= -1e-9
        assert dvel <= 1e-9


def test_equilibrium_gap_zeroes_acceleration():
    for v in (2.0, 6.0, 11.0):
        gap = idm_equilibrium_gap(P, v)
        assert idm_acceleration(P, v, 0.0, gap) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        idm_equilibrium_gap(P, P.v_desired)


def test_equilibrium_simulation_drift():
    v = 9.0
    gap = idm_equilibrium_gap(P, v)
    period = build_period(np.full(101, v), np.zeros(100), v0=v, gap0=gap)
    traj = env.run_episode(IDMPolicy(P), period)
    assert abs(traj.states[-1].v_follow - v) < 1e-6
    assert abs(traj.states[-1].gap - gap) < 1e-6


def test_positive_parameters_enforced():
    with pytest.raises(ValueError):
        IDMParams(a_max=0.0, a_conf=1.0, v_desired=10, beta=4, s_jam=2, t_headway=1)


def test_param_file_roundtrip(tmp_path):
    from cfrl.idm import load_idm_params, save_idm_params

    path = tmp_path / "idm.json"
    save_idm_params(P, path)
    q = load_idm_params(path)
    assert q == P
