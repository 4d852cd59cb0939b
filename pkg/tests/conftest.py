import numpy as np
import pytest

from cfrl import env
from cfrl.data import CFPeriod


def build_period(v_lead, accelerations, v0=None, gap0=15.0, dt=0.1, driver_id="t"):
    """Roll a recorded-acceleration follower forward so the resulting
    period is exactly consistent with the kinematic update."""
    v_lead = np.asarray(v_lead, dtype=float)
    if v0 is None:
        v0 = float(v_lead[0])
    state = env.CFState(v0, float(v_lead[0]) - v0, gap0)
    vf, gaps = [state.v_follow], [state.gap]
    acts = []
    for t, a in enumerate(accelerations):
        state = env.step_state(state, float(a), float(v_lead[t + 1]), dt)
        vf.append(state.v_follow)
        gaps.append(state.gap)
        acts.append(float(a))
    acts.append(acts[-1] if acts else 0.0)
    return CFPeriod(
        dt=dt,
        v_follow=np.array(vf),
        v_lead=v_lead[: len(vf)],
        gap=np.array(gaps),
        a_follow=np.array(acts),
        driver_id=driver_id,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
