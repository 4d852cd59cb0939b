"""Root mean square percentage error, in the pooled ratio-of-sums form."""

from __future__ import annotations

import math

import numpy as np


def rmspe(sim, obs) -> float:
    """sqrt(sum((sim-obs)^2) / sum(obs^2)) over paired samples."""
    sim = np.asarray(sim, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if sim.shape != obs.shape:
        raise ValueError(f"series length mismatch: {sim.shape} vs {obs.shape}")
    if sim.size < 1:
        raise ValueError("rmspe needs at least one sample")
    den = float(np.sum(obs * obs))
    if den == 0.0:
        raise ZeroDivisionError("observed series is identically zero")
    num = float(np.sum((sim - obs) ** 2))
    return math.sqrt(num / den)


def pooled_rmspe(pairs) -> float:
    """RMSPE pooled over several (sim, obs) series as one ratio of sums.

    This is the single-ratio convention: all samples of all periods enter
    one numerator and one denominator, rather than averaging per-period
    errors.
    """
    num = 0.0
    den = 0.0
    count = 0
    for sim, obs in pairs:
        sim = np.asarray(sim, dtype=float)
        obs = np.asarray(obs, dtype=float)
        if sim.shape != obs.shape:
            raise ValueError(f"series length mismatch: {sim.shape} vs {obs.shape}")
        num += float(np.sum((sim - obs) ** 2))
        den += float(np.sum(obs * obs))
        count += sim.size
    if count < 1:
        raise ValueError("rmspe needs at least one sample")
    if den == 0.0:
        raise ZeroDivisionError("observed series is identically zero")
    return math.sqrt(num / den)
