import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrl.metrics import pooled_rmspe, rmspe


def rmspe_oracle(sim, obs):
    # direct summation, scalar loop
    num = 0.0
    den = 0.0
    for s, o in zip(sim, obs):
        num += (s - o) ** 2
        den += o * o
    return math.sqrt(num / den)


def test_perfect_match_is_zero():
    obs = np.array([1.0, 2.0, 3.0])
    assert rmspe(obs, obs) == 0.0


def test_uniform_scaling_factors_out():
    obs = np.array([4.0, 5.0, 6.0, 7.0])
    assert rmspe(1.1 * obs, obs) == pytest.approx(0.1, abs=1e-12)


def test_matches_direct_summation_oracle(rng):
    sim = rng.uniform(1, 50, 100)
    obs = rng.uniform(1, 50, 100)
    assert abs(rmspe(sim, obs) - rmspe_oracle(sim, obs)) <= 1e-12


def test_pooled_is_single_ratio(rng):
    pairs = [(rng.uniform(1, 20, n), rng.uniform(1, 20, n)) for n in (10, 25, 3)]
    sim_all = np.concatenate([p[0] for p in pairs])
    obs_all = np.concatenate([p[1] for p in pairs])
    assert pooled_rmspe(pairs) == pytest.approx(rmspe(sim_all, obs_all), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.floats(min_value=1e-3, max_value=1e3))
def test_scale_covariance(seed, c):
    rng = np.random.default_rng(seed)
    sim = rng.uniform(0.5, 30, 20)
    obs = rng.uniform(0.5, 30, 20)
    assert rmspe(c * sim, c * obs) == pytest.approx(rmspe(sim, obs), rel=1e-9)


def test_length_mismatch():
    with pytest.raises(ValueError):
        rmspe([1.0, 2.0], [1.0])


def test_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        rmspe([1.0, 2.0], [0.0, 0.0])


def test_empty_series():
    with pytest.raises(ValueError):
        rmspe([], [])
