"""Locally weighted regression car-following model (tri-cube, degree 1).

The model memorizes its training pairs; each prediction fits a weighted
linear surface to the span-nearest neighbors of the query and evaluates
it there. Distances are Euclidean on z-scored features so the mixed
units (m/s, m) are comparable.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .env import ACTION_BOUND, CFState
from .errors import InsufficientDataError

DEFAULT_SPAN = 0.4


def tricube_weight(u: float) -> float:
    """(1 - u^3)^3 on [0, 1], zero beyond."""
    if u < 0:
        raise ValueError("tri-cube argument must be nonnegative")
    if u > 1.0:
        return 0.0
    return (1.0 - u**3) ** 3


class LoessModel:
    """Stored-sample local linear regressor from state to acceleration."""

    def __init__(self, x: np.ndarray, y: np.ndarray, span: float = DEFAULT_SPAN):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or len(x) != len(y):
            raise ValueError("x must be (n, d) with matching y")
        if len(x) < 2:
            raise InsufficientDataError("loess needs at least 2 training points")
        if not 0.0 < span <= 1.0:
            raise ValueError("span must be in (0, 1]")
        self.x = x
        self.y = y
        self.span = span
        self.mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.std = np.where(std < 1e-12, 1.0, std)
        self.z = (x - self.mean) / self.std
        self.n_local = int(math.ceil(span * len(x)))

    def predict_with_info(self, query) -> tuple[float, bool]:
        """Returns (acceleration, used_fallback). The fallback path (a
        weighted mean) is taken when the local design matrix is singular
        or every neighbor coincides with the query."""
        q = (np.asarray(query, dtype=float) - self.mean) / self.std
        dist = np.linalg.norm(self.z - q, axis=1)
        order = np.argsort(dist, kind="stable")[: self.n_local]
        local_d = dist[order]
        max_dist = local_d[-1] if len(local_d) else 0.0
        ys = self.y[order]
        if max_dist <= 0.0:
            # all selected neighbors duplicate the query point
            return self._clamp(float(ys.mean())), True
        w = (1.0 - np.minimum(local_d / max_dist, 1.0) ** 3) ** 3
        A = np.hstack([np.ones((len(order), 1)), self.z[order]])
        aw = A * w[:, None]
        lhs = aw.T @ A
        rhs = aw.T @ ys
        try:
            beta = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            wsum = w.sum()
            mean = float((w * ys).sum() / wsum) if wsum > 0 else float(ys.mean())
            return self._clamp(mean), True
        value = float(beta[0] + beta[1:] @ q)
        if not np.isfinite(value):
            wsum = w.sum()
            mean = float((w * ys).sum() / wsum) if wsum > 0 else float(ys.mean())
            return self._clamp(mean), True
        return self._clamp(value), False

    def predict(self, query) -> float:
        return self.predict_with_info(query)[0]

    @staticmethod
    def _clamp(a: float) -> float:
        return min(ACTION_BOUND, max(-ACTION_BOUND, a))

    def save(self, path, driver_id: str = "", split_seed=None) -> None:
        doc = {
            "version": 1,
            "kind": "loess",
            "span": self.span,
            "driver_id": driver_id,
            "split_seed": split_seed,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "LoessModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("kind") != "loess":
            raise ValueError(f"{path} is not a loess model file")
        return cls(np.array(doc["x"]), np.array(doc["y"]), span=doc["span"])


def training_pairs(periods):
    """(state, acceleration) supervision pairs pooled from periods.

    States are raw (v_follow, dv, gap); the target is the recorded
    follower acceleration at the same step. The final sample of each
    period is dropped (its acceleration never acts on a transition).
    """
    xs, ys = [], []
    for p in periods:
        dv = np.asarray(p.v_lead) - np.asarray(p.v_follow)
        x = np.column_stack([p.v_follow, dv, p.gap])[:-1]
        xs.append(x)
        ys.append(np.asarray(p.a_follow)[:-1])
    return np.vstack(xs), np.concatenate(ys)


def fit_loess(periods, span: float = DEFAULT_SPAN) -> LoessModel:
    x, y = training_pairs(periods)
    return LoessModel(x, y, span=span)


class LoessPolicy:
    def __init__(self, model: LoessModel):
        self.model = model

    def __call__(self, s: CFState) -> float:
        return self.model.predict([s.v_follow, s.dv, s.gap])
