"""Synthetic naturalistic-style car-following data.

Leader speed profiles are bounded mean-reverting random walks on [0, 27]
m/s with occasional full-stop phases; the follower is an IDM driver whose
parameters are drawn from a per-style prior, plus optional white
acceleration noise. The priors live in ``style_priors.json`` and were
tuned offline so that pooled gap / time-gap statistics of generated
drivers land near the published aggressive/conservative descriptives.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from . import env
from .data import CFPeriod, DriverDataset
from .idm import IDMParams, idm_acceleration, idm_equilibrium_gap

V_LEAD_MAX = 27.0  # m/s, generator-wide leader speed ceiling
STOP_PROBABILITY = 0.25  # chance that a period contains a stop phase
STOP_DECEL = 1.5  # m/s^2
STOP_ACCEL = 1.2  # m/s^2
_MAX_TRIES = 100


def _load_priors() -> dict:
    with resources.files(__package__).joinpath("style_priors.json").open() as fh:
        return json.load(fh)


_PRIORS = _load_priors()


def style_prior(style: str) -> dict:
    try:
        return _PRIORS[style]
    except KeyError:
        raise ValueError(f"unknown style {style!r}; expected one of {list(_PRIORS)[1:]}")


def draw_idm_params(style: str, rng) -> IDMParams:
    prior = style_prior(style)["idm"]
    return IDMParams(**{k: float(rng.uniform(lo, hi)) for k, (lo, hi) in prior.items()})


def _leader_profile(n_steps, dt, mu, v_cap, with_stop, rng):
    """Mean-reverting walk around mu, clamped to [0, v_cap], with an
    optional brake-dwell-accelerate stop phase overlaid."""
    theta, sigma = 0.2, 0.9  # per-second reversion rate / diffusion
    v = np.empty(n_steps)
    v[0] = min(max(mu + rng.normal(0.0, 1.5), 1.0), v_cap)
    noise = rng.normal(size=n_steps - 1)
    for i in range(1, n_steps):
        step = theta * (mu - v[i - 1]) * dt + sigma * np.sqrt(dt) * noise[i - 1]
        v[i] = min(max(v[i - 1] + step, 0.0), v_cap)

    if with_stop:
        start = int(rng.uniform(0.25, 0.55) * n_steps)
        dwell = int(rng.uniform(2.0, 5.0) / dt)
        i = start
        speed = v[start]
        while i < n_steps and speed > 0.0:  # brake to standstill
            speed = max(0.0, speed - STOP_DECEL * dt)
            v[i] = speed
            i += 1
        end_dwell = min(n_steps, i + dwell)
        v[i:end_dwell] = 0.0
        i = end_dwell
        while i < n_steps and speed < v[i]:  # accelerate back to the walk
            speed = min(v[i], speed + STOP_ACCEL * dt)
            v[i] = speed
            i += 1
    return v


def _simulate_period(params, v_lead, dt, noise_std, rng, driver_id):
    n = len(v_lead)
    v0 = float(v_lead[0])
    gap0 = idm_equilibrium_gap(params, v0) * rng.uniform(0.9, 1.1)
    state = env.CFState(v0, 0.0, gap0)
    # first leader sample is pinned to the follower's speed so dv starts at 0
    v_lead = v_lead.copy()
    v_lead[0] = v0

    vf = np.empty(n)
    gap = np.empty(n)
    acc = np.empty(n)
    vf[0], gap[0] = state.v_follow, state.gap
    a_noise = rng.normal(0.0, noise_std, size=n - 1) if noise_std > 0 else np.zeros(n - 1)
    for t in range(n - 1):
        a = idm_acceleration(params, state.v_follow, state.dv, state.gap)
        a = env.clamp_action(a + a_noise[t])
        state = env.step_state(state, a, float(v_lead[t + 1]), dt)
        vf[t + 1], gap[t + 1] = state.v_follow, state.gap
        acc[t] = a
        if state.gap <= 0.2 or state.gap >= 119.5:
            return None  # reject: too close or drifting out of range
    acc[n - 1] = acc[n - 2]
    return CFPeriod(dt=dt, v_follow=vf, v_lead=v_lead, gap=gap, a_follow=acc,
                    driver_id=driver_id)


def generate_synthetic_driver(
    style: str,
    n_periods: int,
    seed: int,
    *,
    dt: float = env.DEFAULT_DT,
    duration_range: tuple[float, float] = (20.0, 60.0),
    noise_std: float = 0.05,
    idm_params: IDMParams | None = None,
    driver_id: str = "",
) -> DriverDataset:
    """Generate one driver's dataset; deterministic per (style, n, seed).

    ``idm_params`` overrides the prior draw (used for ground-truth
    recovery experiments); ``noise_std=0`` gives an exactly-IDM follower.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be at least 1")
    prior = style_prior(style)
    # stable per-style stream separation (str hash is salted per process)
    style_key = sum(style.encode())
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(style_key,))
    param_stream, *period_streams = ss.spawn(1 + n_periods)
    param_rng = np.random.default_rng(param_stream)
    params = idm_params or draw_idm_params(style, param_rng)
    v_cap = min(V_LEAD_MAX, 0.95 * params.v_desired)

    if not driver_id:
        driver_id = f"{style[:3]}-{seed}"

    periods = []
    mu_lo, mu_hi = prior["leader_mean_speed"]
    for k, stream in enumerate(period_streams):
        rng = np.random.default_rng(stream)
        for _ in range(_MAX_TRIES):
            duration = rng.uniform(*duration_range)
            n_steps = int(round(duration / dt)) + 1
            mu = min(rng.uniform(mu_lo, mu_hi), v_cap)
            with_stop = rng.uniform() < STOP_PROBABILITY
            v_lead = _leader_profile(n_steps, dt, mu, v_cap, with_stop, rng)
            period = _simulate_period(params, v_lead, dt, noise_std, rng, driver_id)
            if period is not None:
                period.validate()
                periods.append(period)
                break
        else:
            raise RuntimeError(f"could not generate a valid period (driver {driver_id}, period {k})")
    return DriverDataset(driver_id=driver_id, periods=periods, style=style)


def generate_population(
    n_aggressive: int,
    n_conservative: int,
    n_periods: int,
    seed: int,
    **kwargs,
) -> list[DriverDataset]:
    """Generate a mixed-style population with per-driver derived seeds."""
    drivers = []
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_aggressive + n_conservative)
    idx = 1
    for i in range(n_aggressive):
        child_seed = int(children[i].generate_state(1)[0])
        drivers.append(
            generate_synthetic_driver(
                "aggressive", n_periods, child_seed, driver_id=f"d{idx:02d}", **kwargs
            )
        )
        idx += 1
    for i in range(n_conservative):
        child_seed = int(children[n_aggressive + i].generate_state(1)[0])
        drivers.append(
            generate_synthetic_driver(
                "conservative", n_periods, child_seed, driver_id=f"d{idx:02d}", **kwargs
            )
        )
        idx += 1
    return drivers
