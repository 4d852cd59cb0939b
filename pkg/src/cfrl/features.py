"""Shared state-vector encoding for the learned models.

Network inputs are the raw (v_follow, dv, gap) state divided by fixed
scales so every component is O(1). The action side never needs
denormalizing because the actor's output scaling is explicit.
"""

import numpy as np

from .env import CFState

V_SCALE = 30.0
DV_SCALE = 10.0
GAP_SCALE = 100.0

STATE_DIM = 3


def state_vector(s: CFState) -> np.ndarray:
    return np.array(
        [s.v_follow / V_SCALE, s.dv / DV_SCALE, s.gap / GAP_SCALE], dtype=float
    )


def state_matrix(v_follow, dv, gap) -> np.ndarray:
    """Column-stack normalized features from raw series."""
    return np.column_stack(
        [
            np.asarray(v_follow, dtype=float) / V_SCALE,
            np.asarray(dv, dtype=float) / DV_SCALE,
            np.asarray(gap, dtype=float) / GAP_SCALE,
        ]
    )
