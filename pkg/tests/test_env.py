import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrl import env
from cfrl.errors import EmptyPeriodError, InvalidActionError

from conftest import build_period


class TestClampAction:
    def test_interior_point(self):
        assert env.clamp_action(0.0) == 0.0

    def test_upper_bound(self):
        assert env.clamp_action(5.0) == 3.0

    def test_lower_bound(self):
        assert env.clamp_action(-7.2) == -3.0

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidActionError):
            env.clamp_action(bad)


class TestStepState:
    def test_direct_arithmetic(self):
        s = env.step_state(env.CFState(10, 2.0, 20), 1.0, 12.0, 0.1)
        assert math.isclose(s.v_follow, 10.1)
        assert math.isclose(s.dv, 1.9)
        assert math.isclose(s.gap, 20.195)

    def test_speed_floor_at_standstill(self):
        s = env.step_state(env.CFState(0, 0, 5), -1.0, 0.0, 0.1)
        assert s == env.CFState(0.0, 0.0, 5.0)

    def test_equilibrium_unchanged(self):
        s0 = env.CFState(10, 0, 15)
        s = env.step_state(s0, 0.0, 10.0, 0.1)
        assert s == s0

    def test_trapezoid_identity_with_floor(self):
        # when the floor binds, the gap update must stay consistent with
        # the realized speed change
        s0 = env.CFState(0.2, -0.2, 5.0)
        s = env.step_state(s0, -3.0, 0.0, 0.1)
        assert s.v_follow == 0.0
        assert math.isclose(s.gap - s0.gap, 0.5 * (s0.dv + s.dv) * 0.1, rel_tol=0, abs_tol=1e-15)


class TestRunEpisode:
    def test_constant_speed_constant_gap(self):
        period = build_period(np.full(50, 8.0), np.zeros(49), gap0=12.0)
        traj = env.run_episode(lambda s: 0.0, period)
        assert not traj.collided
        assert all(math.isclose(s.gap, 12.0) for s in traj.states)

    def test_replay_identity(self, rng):
        v_lead = np.clip(10 + np.cumsum(rng.normal(0, 0.1, 200)), 0, None)
        acts = rng.uniform(-1.5, 1.5, 199)
        period = build_period(v_lead, acts, gap0=30.0)
        traj = env.run_episode(env.ReplayPolicy(period.a_follow), period)
        err = np.max(np.abs(np.array(traj.v_follow) - period.v_follow))
        assert err <= 1e-9

    def test_hard_brake_collides(self):
        # leader stopped, 1 m gap, 10 m/s closing: hand integration of the
        # trapezoid puts the crossing inside the first two steps
        period = build_period(np.zeros(40), np.zeros(39), v0=10.0, gap0=1.0)
        traj = env.run_episode(lambda s: -3.0, period)
        assert traj.collided
        assert (len(traj.states) - 1) * period.dt <= 2.0
        assert traj.states[-1].gap <= 0.0

    def test_too_short_period_rejected(self):
        period = build_period(np.array([10.0]), [], gap0=10.0)
        with pytest.raises(EmptyPeriodError):
            env.run_episode(lambda s: 0.0, period)

    def test_determinism(self, rng):
        v_lead = 12 + np.sin(np.arange(80) * 0.2)
        period = build_period(v_lead, rng.uniform(-1, 1, 79), gap0=20.0)
        pol = lambda s: 0.3 * s.dv - 0.01 * (s.gap - 15)
        t1 = env.run_episode(pol, period)
        t2 = env.run_episode(pol, period)
        assert t1.v_follow == t2.v_follow
        assert t1.gap == t2.gap
        assert t1.actions == t2.actions


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_trapezoid_consistency_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 60))
    v_lead = np.clip(rng.uniform(0, 25) + np.cumsum(rng.normal(0, 0.2, n)), 0, 27)
    period = build_period(v_lead, rng.uniform(-3, 3, n - 1), gap0=float(rng.uniform(5, 80)))
    traj = env.run_episode(env.ReplayPolicy(period.a_follow), period)
    for a, b in zip(traj.states, traj.states[1:]):
        assert abs((b.gap - a.gap) - 0.5 * (a.dv + b.dv) * traj.dt) <= 1e-12
        assert b.v_follow >= 0.0


def test_constant_acceleration_closed_form():
    dt, a, n = 0.1, 0.7, 100
    v0 = 5.0
    state = env.CFState(v0, 15.0 - v0, 40.0)
    for _ in range(n):
        state = env.step_state(state, a, 15.0, dt)
    expected = v0 + n * a * dt
    assert abs(state.v_follow - expected) / expected <= 1e-12
