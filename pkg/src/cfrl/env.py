"""Deterministic car-following simulation environment.

States evolve under a point-mass kinematic update at a fixed time step:
follower speed integrates the commanded acceleration, and spacing
integrates the relative speed with the trapezoidal rule, so the pair
(speed series, spacing series) is always mutually consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyPeriodError, InvalidActionError

ACTION_BOUND = 3.0  # |acceleration| limit, m/s^2
DEFAULT_DT = 0.1  # s


@dataclass(frozen=True)
class CFState:
    """Instantaneous car-following state.

    v_follow : follower speed (m/s)
    dv       : relative speed, leader minus follower (m/s)
    gap      : inter-vehicle spacing (m)
    """

    v_follow: float
    dv: float
    gap: float

    @property
    def v_lead(self) -> float:
        return self.v_follow + self.dv


@dataclass
class SimTrajectory:
    """Result of one simulated episode.

    len(actions) == len(states) - 1, and each adjacent state pair is
    exactly one `step_state` transition apart.
    """

    dt: float
    states: list[CFState]
    actions: list[float]
    collided: bool = False

    @property
    def v_follow(self):
        return [s.v_follow for s in self.states]

    @property
    def gap(self):
        return [s.gap for s in self.states]


def clamp_action(a_raw: float) -> float:
    """Clamp a commanded acceleration to the +-3 m/s^2 action bound."""
    if not math.isfinite(a_raw):
        raise InvalidActionError(f"non-finite acceleration: {a_raw!r}")
    return min(ACTION_BOUND, max(-ACTION_BOUND, a_raw))


def step_state(s: CFState, a: float, v_lead_next: float, dt: float) -> CFState:
    """Advance one time step under acceleration `a` (already clamped).

    Follower speed is floored at zero; spacing integrates relative speed
    with the trapezoidal rule, which keeps the gap series exactly
    consistent with the realized speed series even when the floor binds.
    """
    v_next = s.v_follow + a * dt
    if v_next < 0.0:
        v_next = 0.0
    dv_next = v_lead_next - v_next
    gap_next = s.gap + 0.5 * (s.dv + dv_next) * dt
    return CFState(v_next, dv_next, gap_next)


def effective_acceleration(s: CFState, s_next: CFState, dt: float) -> float:
    """Acceleration actually realized between two states (floor-aware)."""
    return (s_next.v_follow - s.v_follow) / dt


def run_episode(policy, period, dt: float | None = None) -> SimTrajectory:
    """Roll a policy against a recorded leader-speed series.

    The initial state is copied from the period's first sample; leader
    speed is fed externally from the period at every step. Stops early
    with ``collided=True`` if the spacing reaches zero. ``policy`` is a
    callable ``CFState -> acceleration``; if it has a ``reset`` method
    it is called with the initial state before the rollout (stateful
    policies use this to clear windows / hidden state).
    """
    n = len(period.v_follow)
    if n < 2:
        raise EmptyPeriodError("period must contain at least 2 samples")
    if dt is None:
        dt = period.dt

    state = CFState(
        float(period.v_follow[0]),
        float(period.v_lead[0]) - float(period.v_follow[0]),
        float(period.gap[0]),
    )
    if hasattr(policy, "reset"):
        policy.reset(state)

    states = [state]
    actions: list[float] = []
    collided = False
    for t in range(n - 1):
        a = clamp_action(policy(state))
        state = step_state(state, a, float(period.v_lead[t + 1]), dt)
        states.append(state)
        actions.append(a)
        if state.gap <= 0.0:
            collided = True
            break
    return SimTrajectory(dt=dt, states=states, actions=actions, collided=collided)


class ReplayPolicy:
    """Replays a recorded acceleration series (identity check / simulate)."""

    def __init__(self, accelerations):
        self._acc = [float(a) for a in accelerations]
        self._i = 0

    def reset(self, _s0: CFState) -> None:
        self._i = 0

    def __call__(self, _state: CFState) -> float:
        a = self._acc[self._i]
        self._i += 1
        return a
