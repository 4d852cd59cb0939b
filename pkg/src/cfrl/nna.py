"""Feedforward acceleration predictor (same architecture as the actor).

Supervised counterpart to the RL models: a 3-30-1 network with a tanh
output scaled to +-3 m/s^2, trained with Adam on mean squared error
against recorded accelerations.
"""

from __future__ import annotations

import json

import numpy as np

from .env import ACTION_BOUND, CFState
from .errors import DivergenceError, InsufficientDataError
from .features import DV_SCALE, GAP_SCALE, V_SCALE, state_vector
from .loess import training_pairs
from .net import Adam, DenseNet, build_net, flatten_grads, net_from_dict, net_to_dict

HIDDEN = 30


class NNaModel:
    def __init__(self, net: DenseNet):
        self.net = net

    def predict(self, state) -> float:
        """state is raw (v_follow, dv, gap)."""
        v, dv, gap = state
        x = np.array([v / V_SCALE, dv / DV_SCALE, gap / GAP_SCALE])
        return ACTION_BOUND * float(self.net.forward(x)[0])

    def save(self, path, driver_id: str = "", split_seed=None) -> None:
        doc = {
            "version": 1,
            "kind": "nna",
            "driver_id": driver_id,
            "split_seed": split_seed,
            "net": net_to_dict(self.net),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "NNaModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("kind") != "nna":
            raise ValueError(f"{path} is not an NNa model file")
        return cls(net_from_dict(doc["net"]))


def train_nna(x, y, *, epochs: int = 200, batch: int = 64, lr: float = 1e-3,
              seed: int = 0):
    """Fit on raw-state inputs x (n, 3) and acceleration targets y (n,).

    Returns (model, per-epoch MSE history).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    if len(x) < batch:
        raise InsufficientDataError(f"need at least {batch} training pairs, got {len(x)}")
    xn = x / np.array([V_SCALE, DV_SCALE, GAP_SCALE])

    ss = np.random.SeedSequence(seed)
    init_rng, shuffle_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    net = build_net([3, HIDDEN, 1], ["relu", "tanh"], init_rng)
    opt = Adam(net.parameters(), lr)

    history = []
    n = len(xn)
    for _ in range(epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n - batch + 1, batch):
            idx = order[lo : lo + batch]
            xb, yb = xn[idx], y[idx]
            pred = ACTION_BOUND * net.forward(xb)
            diff = pred - yb
            loss = float(np.mean(diff**2))
            if not np.isfinite(loss):
                raise DivergenceError("NNa training loss is not finite")
            grads, _ = net.backward(xb, (2.0 * ACTION_BOUND / len(xb)) * diff)
            opt.step(flatten_grads(grads))
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return NNaModel(net), history


def fit_nna(periods, **kwargs):
    x, y = training_pairs(periods)
    return train_nna(x, y, **kwargs)


class NNaPolicy:
    def __init__(self, model: NNaModel):
        self.model = model

    def __call__(self, s: CFState) -> float:
        return ACTION_BOUND * float(self.model.net.forward(state_vector(s))[0])
