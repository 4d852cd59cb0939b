"""Recurrent car-following model trained through the simulation loop.

The cell is h' = ReLU(W_h h + W_i x + b_i), output = W_o h' + b_o. The
training objective is the normalized squared spacing error of closed-loop
rollouts, so backpropagation through time runs through both the hidden
recurrence and the kinematic state update: spacing at step t depends on
every earlier acceleration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import ACTION_BOUND, CFState
from .errors import DivergenceError, InsufficientDataError
from .features import DV_SCALE, GAP_SCALE, V_SCALE, state_vector
from .net import Adam

HIDDEN = 60
INPUT_DIM = 3
BPTT_TRUNCATION = 50  # gradient segment length; full BPTT when rollouts are shorter


@dataclass
class RNNModel:
    W_i: np.ndarray  # (H, 3) input weights
    b_i: np.ndarray  # (H,) input bias
    W_h: np.ndarray  # (H, H) recurrent weights
    W_o: np.ndarray  # (H,) output weights
    b_o: np.ndarray = field(default_factory=lambda: np.zeros(1))  # output bias

    @property
    def hidden(self) -> int:
        return len(self.b_i)

    def parameters(self):
        return [self.W_i, self.b_i, self.W_h, self.W_o, self.b_o]

    def copy(self) -> "RNNModel":
        return RNNModel(self.W_i.copy(), self.b_i.copy(), self.W_h.copy(),
                        self.W_o.copy(), self.b_o.copy())

    def save(self, path, driver_id: str = "", split_seed=None) -> None:
        doc = {
            "version": 1,
            "kind": "rnn",
            "driver_id": driver_id,
            "split_seed": split_seed,
            "hidden": self.hidden,
            "W_i": self.W_i.tolist(),
            "b_i": self.b_i.tolist(),
            "W_h": self.W_h.tolist(),
            "W_o": self.W_o.tolist(),
            "b_o": float(self.b_o[0]),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "RNNModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("kind") != "rnn":
            raise ValueError(f"{path} is not an RNN model file")
        return cls(
            np.array(doc["W_i"]), np.array(doc["b_i"]), np.array(doc["W_h"]),
            np.array(doc["W_o"]), np.array([float(doc["b_o"])]),
        )


def init_rnn(rng, hidden: int = HIDDEN) -> RNNModel:
    return RNNModel(
        W_i=rng.uniform(-1, 1, size=(hidden, INPUT_DIM)) / np.sqrt(INPUT_DIM),
        b_i=rng.uniform(-1, 1, size=hidden) / np.sqrt(hidden),
        W_h=rng.uniform(-1, 1, size=(hidden, hidden)) / np.sqrt(hidden),
        W_o=rng.uniform(-3e-3, 3e-3, size=hidden),
        b_o=rng.uniform(-3e-3, 3e-3, size=1),
    )


def rnn_step(m: RNNModel, h: np.ndarray, x) -> tuple[np.ndarray, float]:
    """One cell evaluation; returns (next hidden state, clamped output)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (INPUT_DIM,) or h.shape != (m.hidden,):
        raise ValueError("rnn_step shape mismatch")
    pre = m.W_h @ h + m.W_i @ x + m.b_i
    h_next = np.maximum(pre, 0.0)
    out = float(m.W_o @ h_next + m.b_o[0])
    return h_next, min(ACTION_BOUND, max(-ACTION_BOUND, out))


# ---------------------------------------------------------------------------
# pure-sequence path (gradient checking of the cell itself)


def sequence_forward(m: RNNModel, xs: np.ndarray):
    """Run the cell over inputs xs (T, 3) from h=0; returns unclamped
    outputs and the caches needed for the backward pass."""
    T = len(xs)
    hs = np.zeros((T, m.hidden))
    pres = np.zeros((T, m.hidden))
    outs = np.zeros(T)
    h = np.zeros(m.hidden)
    for t in range(T):
        pre = m.W_h @ h + m.W_i @ xs[t] + m.b_i
        h = np.maximum(pre, 0.0)
        pres[t], hs[t] = pre, h
        outs[t] = m.W_o @ h + m.b_o[0]
    return outs, (xs, pres, hs)


def sequence_backward(m: RNNModel, caches, gout: np.ndarray):
    """Exact BPTT for the pure cell; gout holds dL/d(output_t).

    Returns (grads aligned with parameters(), gxs).
    """
    xs, pres, hs = caches
    T = len(xs)
    gW_i = np.zeros_like(m.W_i)
    gb_i = np.zeros_like(m.b_i)
    gW_h = np.zeros_like(m.W_h)
    gW_o = np.zeros_like(m.W_o)
    gb_o = np.zeros(1)
    gxs = np.zeros_like(xs)
    gh_carry = np.zeros(m.hidden)
    for t in range(T - 1, -1, -1):
        go = gout[t]
        gW_o += go * hs[t]
        gb_o[0] += go
        gh = m.W_o * go + gh_carry
        gpre = gh * (pres[t] > 0.0)
        h_prev = hs[t - 1] if t > 0 else np.zeros(m.hidden)
        gW_h += np.outer(gpre, h_prev)
        gW_i += np.outer(gpre, xs[t])
        gb_i += gpre
        gh_carry = m.W_h.T @ gpre
        gxs[t] = m.W_i.T @ gpre
    return [gW_i, gb_i, gW_h, gW_o, gb_o], gxs


# ---------------------------------------------------------------------------
# closed-loop rollout and its gradient


def rollout(m: RNNModel, period):
    """Closed-loop simulation of a period; returns the simulated speed and
    gap series plus the caches the coupled backward pass needs."""
    obs_v = np.asarray(period.v_follow, dtype=float)
    vl = np.asarray(period.v_lead, dtype=float)
    obs_gap = np.asarray(period.gap, dtype=float)
    T = len(obs_v)
    dt = period.dt

    v = np.zeros(T)
    S = np.zeros(T)
    v[0], S[0] = obs_v[0], obs_gap[0]
    xs = np.zeros((T - 1, INPUT_DIM))
    pres = np.zeros((T - 1, m.hidden))
    hs = np.zeros((T - 1, m.hidden))
    outs = np.zeros(T - 1)
    floored = np.zeros(T - 1, dtype=bool)
    h = np.zeros(m.hidden)
    for t in range(T - 1):
        x = np.array([v[t] / V_SCALE, (vl[t] - v[t]) / DV_SCALE, S[t] / GAP_SCALE])
        pre = m.W_h @ h + m.W_i @ x + m.b_i
        h = np.maximum(pre, 0.0)
        o = float(m.W_o @ h + m.b_o[0])
        a = min(ACTION_BOUND, max(-ACTION_BOUND, o))
        xs[t], pres[t], hs[t], outs[t] = x, pre, h, o
        vn = v[t] + a * dt
        floored[t] = vn < 0.0
        v[t + 1] = max(0.0, vn)
        S[t + 1] = S[t] + 0.5 * ((vl[t] - v[t]) + (vl[t + 1] - v[t + 1])) * dt
    return v, S, (xs, pres, hs, outs, floored, vl, obs_gap, dt)


def rollout_objective(S: np.ndarray, obs_gap: np.ndarray) -> float:
    """Mean normalized squared spacing error over the simulated steps."""
    e = (S[1:] - obs_gap[1:]) / obs_gap[1:]
    return float(np.mean(e**2))


def rollout_gradients(m: RNNModel, caches, S: np.ndarray,
                      truncation: int = BPTT_TRUNCATION):
    """BPTT through both the cell and the kinematic update.

    Gradients flow from each spacing-error term backwards through the
    trapezoidal gap update, the speed floor, the output clamp and the
    hidden recurrence; carries are cut at `truncation`-step boundaries.
    Returns grads aligned with parameters().
    """
    xs, pres, hs, outs, floored, vl, obs_gap, dt = caches
    T = len(S)
    n_terms = T - 1
    gW_i = np.zeros_like(m.W_i)
    gb_i = np.zeros_like(m.b_i)
    gW_h = np.zeros_like(m.W_h)
    gW_o = np.zeros_like(m.W_o)
    gb_o = np.zeros(1)

    def dloss_dS(t):
        return 2.0 * (S[t] - obs_gap[t]) / (obs_gap[t] ** 2) / n_terms

    gv_next = 0.0
    gS_next = dloss_dS(T - 1)
    gh_carry = np.zeros(m.hidden)
    for t in range(T - 2, -1, -1):
        gv_total = gv_next - 0.5 * dt * gS_next  # v[t+1] also enters S[t+1]
        gv_pass = 0.0 if floored[t] else gv_total
        ga = gv_pass * dt
        go = ga if abs(outs[t]) < ACTION_BOUND else 0.0

        gW_o += go * hs[t]
        gb_o[0] += go
        gh = m.W_o * go + gh_carry
        gpre = gh * (pres[t] > 0.0)
        h_prev = hs[t - 1] if t > 0 else np.zeros(m.hidden)
        gW_h += np.outer(gpre, h_prev)
        gW_i += np.outer(gpre, xs[t])
        gb_i += gpre
        gh_carry = m.W_h.T @ gpre
        gx = m.W_i.T @ gpre

        gv_t = gv_pass - 0.5 * dt * gS_next  # v[t] in v[t+1] and in S[t+1]
        gS_t = gS_next
        gv_t += gx[0] / V_SCALE - gx[1] / DV_SCALE
        gS_t += gx[2] / GAP_SCALE
        if t >= 1:
            gS_t += dloss_dS(t)
        gv_next, gS_next = gv_t, gS_t

        if truncation and t > 0 and t % truncation == 0:
            gv_next = 0.0
            gS_next = 0.0
            gh_carry = np.zeros(m.hidden)
    return [gW_i, gb_i, gW_h, gW_o, gb_o]


def dataset_objective(m: RNNModel, periods) -> float:
    losses = []
    for period in periods:
        _, S, caches = rollout(m, period)
        losses.append(rollout_objective(S, caches[6]))
    return float(np.mean(losses))


def rnn_train(periods, *, epochs: int = 40, lr: float = 1e-3, hidden: int = HIDDEN,
              seed: int = 0, truncation: int = BPTT_TRUNCATION):
    """Train on closed-loop spacing error; one Adam step per period.

    Returns (model at the best epoch, objective history). history[0] is
    the untrained objective, history[k] the objective after k epochs.
    """
    periods = list(periods)
    if not periods:
        raise InsufficientDataError("RNN training needs at least one period")
    rng = np.random.default_rng(seed)
    model = init_rnn(rng, hidden=hidden)
    opt = Adam(model.parameters(), lr)

    obj = dataset_objective(model, periods)
    if not np.isfinite(obj):
        raise DivergenceError("RNN rollout objective is not finite")
    history = [obj]
    best = (obj, model.copy())
    for _ in range(epochs):
        for period in periods:
            _, S, caches = rollout(model, period)
            opt.step(rollout_gradients(model, caches, S, truncation))
        obj = dataset_objective(model, periods)
        if not np.isfinite(obj):
            raise DivergenceError("RNN rollout objective is not finite")
        history.append(obj)
        if obj < best[0]:
            best = (obj, model.copy())
    return best[1], history


class RNNPolicy:
    """Stateful policy: hidden state resets at each episode start."""

    def __init__(self, model: RNNModel):
        self.model = model
        self.h = np.zeros(model.hidden)

    def reset(self, _s0: CFState) -> None:
        self.h = np.zeros(self.model.hidden)

    def __call__(self, s: CFState) -> float:
        self.h, a = rnn_step(self.model, self.h, state_vector(s))
        return a
