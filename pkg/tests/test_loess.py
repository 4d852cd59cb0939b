import math

import numpy as np
import pytest

from cfrl.errors import InsufficientDataError
from cfrl.loess import DEFAULT_SPAN, LoessModel, fit_loess, tricube_weight

from conftest import build_period


class TestTricube:
    def test_at_zero(self):
        assert tricube_weight(0.0) == 1.0

    def test_at_one(self):
        assert tricube_weight(1.0) == 0.0

    def test_half(self):
        assert tricube_weight(0.5) == pytest.approx(0.669921875, abs=1e-15)

    def test_beyond_support(self):
        assert tricube_weight(1.5) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            tricube_weight(-0.1)


def brute_force_loess(query, x, y, span):
    """Independent re-derivation: explicit loops, stable sort, weighted
    normal equations on standardized features."""
    n, d = x.shape
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    z = (x - mean) / std
    q = (np.asarray(query) - mean) / std
    dist = np.array([math.sqrt(sum((z[i, j] - q[j]) ** 2 for j in range(d))) for i in range(n)])
    take = int(math.ceil(span * n))
    order = np.argsort(dist, kind="stable")[:take]
    dmax = dist[order[-1]]
    lhs = np.zeros((d + 1, d + 1))
    rhs = np.zeros(d + 1)
    for i in order:
        u = dist[i] / dmax
        w = (1 - u**3) ** 3 if u <= 1 else 0.0
        row = np.concatenate([[1.0], z[i]])
        for a in range(d + 1):
            rhs[a] += w * row[a] * y[i]
            for b in range(d + 1):
                lhs[a, b] += w * row[a] * row[b]
    beta = np.linalg.solve(lhs, rhs)
    value = float(beta[0] + beta[1:] @ q)
    return min(3.0, max(-3.0, value))  # the documented output clamp


def test_linear_data_reproduced_exactly(rng):
    c = np.array([0.2, -0.5, 0.01])
    x = rng.uniform(-5, 5, size=(120, 3))
    y = x @ c
    model = LoessModel(x, y, span=0.4)
    for _ in range(10):
        q = rng.uniform(-4, 4, 3)
        assert abs(model.predict(q) - float(q @ c)) <= 1e-9


def test_duplicate_point_dominance(rng):
    # query equals a training point; when all selected neighbors collapse
    # onto it, the weighted-mean fallback returns the duplicated target
    x = np.vstack([np.zeros((5, 3)), rng.uniform(1, 2, size=(5, 3))])
    y = np.array([2.0] * 5 + [0.0] * 5)
    model = LoessModel(x, y, span=0.4)  # 4 nearest of 10 -> the duplicates
    value, fallback = model.predict_with_info(np.zeros(3))
    assert fallback
    assert value == pytest.approx(2.0)


def test_matches_brute_force_wls(rng):
    x = rng.uniform(-3, 3, size=(200, 3))
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] ** 2 - x[:, 2] + rng.normal(0, 0.05, 200)
    y = np.clip(y, -3, 3)  # keep targets inside the clamp so it never binds
    model = LoessModel(x, y, span=DEFAULT_SPAN)
    for _ in range(20):
        q = rng.uniform(-2.5, 2.5, 3)
        expected = brute_force_loess(q, x, y, DEFAULT_SPAN)
        assert abs(model.predict(q) - expected) <= 1e-8


def test_prediction_clamped(rng):
    x = rng.uniform(0, 1, size=(50, 3))
    y = np.full(50, 100.0)
    model = LoessModel(x, y)
    assert model.predict(rng.uniform(0, 1, 3)) == 3.0


def test_needs_two_points():
    with pytest.raises(InsufficientDataError):
        LoessModel(np.zeros((1, 3)), np.zeros(1))


def test_fit_from_periods_and_roundtrip(tmp_path, rng):
    periods = [build_period(10 + np.cumsum(rng.normal(0, 0.1, 40)),
                            rng.uniform(-1, 1, 39)) for _ in range(3)]
    model = fit_loess(periods)
    path = tmp_path / "loess.json"
    model.save(path, driver_id="d01", split_seed=7)
    loaded = LoessModel.load(path)
    q = np.array([10.0, 0.0, 15.0])
    assert loaded.predict(q) == pytest.approx(model.predict(q), abs=1e-15)
