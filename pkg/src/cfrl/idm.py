"""Intelligent driver model: acceleration law, equilibrium, policy wrapper."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .env import CFState, clamp_action
from .errors import CollisionStateError

# calibration box used by the GA (the model itself accepts any positive values)
IDM_BOUNDS = {
    "a_max": (0.1, 5.0),
    "a_conf": (0.1, 5.0),
    "v_desired": (1.0, 40.0),
    "beta": (1.0, 10.0),
    "s_jam": (0.1, 10.0),
    "t_headway": (0.1, 5.0),
}
PARAM_ORDER = tuple(IDM_BOUNDS)


@dataclass(frozen=True)
class IDMParams:
    a_max: float  # maximum acceleration, m/s^2
    a_conf: float  # comfortable deceleration, m/s^2
    v_desired: float  # desired speed, m/s
    beta: float  # speed-deficit exponent
    s_jam: float  # standstill spacing, m
    t_headway: float  # desired time headway, s

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value > 0):
                raise ValueError(f"IDM parameter {name} must be positive, got {value}")

    def as_vector(self):
        return [getattr(self, k) for k in PARAM_ORDER]

    @classmethod
    def from_vector(cls, vec) -> "IDMParams":
        return cls(**dict(zip(PARAM_ORDER, map(float, vec))))


def idm_acceleration(p: IDMParams, v: float, dv: float, gap: float) -> float:
    """Acceleration for follower speed v, relative speed dv (leader minus
    follower) and spacing gap, clamped to the environment action bound."""
    if gap <= 0.0:
        raise CollisionStateError(f"IDM queried at non-positive gap {gap}")
    s_star = p.s_jam + max(
        0.0, v * p.t_headway - v * dv / (2.0 * math.sqrt(p.a_max * p.a_conf))
    )
    a = p.a_max * (1.0 - (v / p.v_desired) ** p.beta - (s_star / gap) ** 2)
    return clamp_action(a)


def idm_equilibrium_gap(p: IDMParams, v: float) -> float:
    """Spacing at which acceleration is exactly zero for steady speed v."""
    if v >= p.v_desired:
        raise ValueError("no equilibrium at or above the desired speed")
    s_star = p.s_jam + v * p.t_headway
    return s_star / math.sqrt(1.0 - (v / p.v_desired) ** p.beta)


class IDMPolicy:
    """state -> acceleration interface shared with the learned models."""

    def __init__(self, params: IDMParams):
        self.params = params

    def __call__(self, s: CFState) -> float:
        return idm_acceleration(self.params, s.v_follow, s.dv, s.gap)


def save_idm_params(params: IDMParams, path) -> None:
    with open(path, "w") as fh:
        json.dump({"version": 1, "kind": "idm", **asdict(params)}, fh, indent=2)


def load_idm_params(path) -> IDMParams:
    with open(path) as fh:
        doc = json.load(fh)
    return IDMParams(**{k: float(doc[k]) for k in PARAM_ORDER})
