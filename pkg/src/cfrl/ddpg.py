"""DDPG car-following agent: reward, exploration, replay, training loops.

The agent keeps four networks (actor/critic and their slowly tracking
target twins), a FIFO replay buffer and an Ornstein-Uhlenbeck noise
process. Variants differ only in the reward quantity (spacing vs speed)
and the input window: the reaction-time models read the last 1 s of
states instead of the instantaneous state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np

from . import env
from .data import CFPeriod
from .errors import InvalidObservationError
from .evaluate import spacing_rmspe
from .features import STATE_DIM, state_vector
from .net import (Adam, DenseNet, build_net, flatten_grads, net_from_dict,
                  net_to_dict, soft_update)

REL_ERR_MIN = 1e-3
REL_ERR_MAX = 1e3
REWARD_MAX = -math.log(REL_ERR_MIN)  # +6.9078
REWARD_MIN = -math.log(REL_ERR_MAX)  # -6.9078

def collision_reward(gamma: float) -> float:
    """Terminal collisions are priced at the discounted infinite-horizon
    minimum so that, with terminal-state masking, crashing can never look
    cheaper to the critic than the worst possible ongoing tracking error."""
    return REWARD_MIN / max(1.0 - gamma, 0.1)

# guard for observations that hit zero (stopped traffic in speed mode)
OBS_FLOOR = 0.01

RT_STEPS = 10  # 1 s of history at dt = 0.1 s

VARIANTS = {
    "ddpgs": ("spacing", 1),
    "ddpgv": ("speed", 1),
    "ddpgsrt": ("spacing", RT_STEPS),
    "ddpgvrt": ("speed", RT_STEPS),
}


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    gamma: float = 0.9
    minibatch: int = 256
    replay_start: int = 7000
    replay_capacity: int = 10000
    tau: float = 0.01
    episodes: int = 60
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    reward_mode: str = "spacing"  # spacing | speed
    rt_window: int = 1  # 1 = instantaneous state, 10 = 1 s history

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.replay_start > self.replay_capacity:
            raise ValueError("replay_start cannot exceed replay_capacity")
        if self.reward_mode not in ("spacing", "speed"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")
        if self.rt_window < 1:
            raise ValueError("rt_window must be >= 1")


def variant_config(name: str, **overrides) -> TrainConfig:
    try:
        mode, window = VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown DDPG variant {name!r}; expected one of {sorted(VARIANTS)}")
    return TrainConfig(reward_mode=mode, rt_window=window, **overrides)


def reward(sim: float, obs: float) -> float:
    """Negative log of the clipped relative error |sim-obs|/obs.

    Zero error maps to +6.9078, relative error 1 to 0, and errors at or
    beyond 1000x to -6.9078; strictly decreasing in between.
    """
    if obs <= 0.0:
        raise InvalidObservationError(f"observation must be positive, got {obs}")
    e = abs(sim - obs) / obs
    e = min(max(e, REL_ERR_MIN), REL_ERR_MAX)
    return -math.log(e)


class OUNoise:
    """Ornstein-Uhlenbeck process with unit time step, centered on zero."""

    def __init__(self, theta: float, sigma: float, rng):
        self.theta = theta
        self.sigma = sigma
        self.rng = rng
        self.x = 0.0

    def reset(self) -> None:
        self.x = 0.0

    def sample(self) -> float:
        self.x += self.theta * (0.0 - self.x) + self.sigma * self.rng.standard_normal()
        return self.x


class ReplayBuffer:
    """Fixed-capacity FIFO transition cache with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, 1))
        self.rewards = np.zeros((capacity, 1))
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros((capacity, 1))
        self.count = 0  # total pushes; oldest entries overwritten first

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def push(self, s, a, r, s_next, terminal) -> None:
        i = self.count % self.capacity
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.terminals[i] = 1.0 if terminal else 0.0
        self.count += 1

    def sample(self, n: int, rng):
        idx = rng.integers(0, len(self), size=n)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )


class StateWindow:
    """Maintains the flattened network input for one rollout.

    With k=1 the input is the current state. With k>1 the input is the k
    most recent states ending at t-1 (oldest first), so the agent acts on
    observations delayed by one step up to k steps; warm-up repeats the
    initial state.
    """

    def __init__(self, k: int):
        self.k = k
        self.delayed = k > 1
        self.buf: list[np.ndarray] = []

    def reset(self, s0: env.CFState) -> None:
        self.buf = [state_vector(s0)] * self.k

    def observe(self, s: env.CFState) -> np.ndarray:
        vec = state_vector(s)
        if self.delayed:
            x = np.concatenate(self.buf)
            self.buf = self.buf[1:] + [vec]
        else:
            self.buf = self.buf[1:] + [vec]
            x = np.concatenate(self.buf)
        return x


class DdpgAgent:
    """Actor-critic pair with target twins, replay and exploration noise."""

    def __init__(self, config: TrainConfig, seed: int = 0):
        self.config = config
        self.input_dim = STATE_DIM * config.rt_window
        hidden = 30 if config.rt_window == 1 else 100
        ss = np.random.SeedSequence(seed)
        s_actor, s_critic, s_noise, s_sample = ss.spawn(4)
        self.actor = build_net([self.input_dim, hidden, 1], ["relu", "tanh"],
                               np.random.default_rng(s_actor))
        self.critic = build_net([self.input_dim + 1, hidden, 1], ["relu", "identity"],
                                np.random.default_rng(s_critic))
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.replay = ReplayBuffer(config.replay_capacity, self.input_dim)
        self.noise = OUNoise(config.ou_theta, config.ou_sigma, np.random.default_rng(s_noise))
        self.sample_rng = np.random.default_rng(s_sample)
        self.opt_actor = Adam(self.actor.parameters(), config.learning_rate)
        self.opt_critic = Adam(self.critic.parameters(), config.learning_rate)
        self.driver_id = ""
        self.split_seed: int | None = None

    def reseed(self, seed: int) -> None:
        """Fresh noise / sampling streams (used when retraining)."""
        s_noise, s_sample = np.random.SeedSequence(seed).spawn(2)
        self.noise = OUNoise(self.config.ou_theta, self.config.ou_sigma,
                             np.random.default_rng(s_noise))
        self.sample_rng = np.random.default_rng(s_sample)

    # -- acting ------------------------------------------------------------

    def select_action(self, x: np.ndarray, explore: bool = True) -> float:
        out = float(self.actor.forward(x)[0])
        a = env.ACTION_BOUND * out
        if explore:
            a += self.noise.sample()
        return min(env.ACTION_BOUND, max(-env.ACTION_BOUND, a))

    def policy(self):
        """Noise-free evaluation policy (fresh window per episode)."""
        return DdpgPolicy(self.actor, self.config.rt_window)

    # -- learning ----------------------------------------------------------

    def critic_targets(self, rewards, next_states, terminals) -> np.ndarray:
        a_next = env.ACTION_BOUND * self.target_actor.forward(next_states)
        q_next = self.target_critic.forward(np.hstack([next_states, a_next]))
        return rewards + self.config.gamma * (1.0 - terminals) * q_next

    def train_step(self, batch) -> float:
        states, actions, rewards, next_states, terminals = batch
        n = len(states)

        y = self.critic_targets(rewards, next_states, terminals)
        x_critic = np.hstack([states, actions])
        q = self.critic.forward(x_critic)
        diff = q - y
        loss = float(np.mean(diff**2))
        grads_c, _ = self.critic.backward(x_critic, (2.0 / n) * diff)
        self.opt_critic.step(flatten_grads(grads_c))

        # ascend mean Q(s, mu(s)): action gradient from the critic input
        a_pi = env.ACTION_BOUND * self.actor.forward(states)
        _, gx = self.critic.backward(np.hstack([states, a_pi]), np.full((n, 1), 1.0 / n))
        dq_da = gx[:, -1:]
        grads_a, _ = self.actor.backward(states, -env.ACTION_BOUND * dq_da)
        self.opt_actor.step(flatten_grads(grads_a))

        soft_update(self.target_critic, self.critic, self.config.tau)
        soft_update(self.target_actor, self.actor, self.config.tau)
        return loss

    def snapshot(self) -> dict:
        return {
            "actor": self.actor.copy(),
            "critic": self.critic.copy(),
            "target_actor": self.target_actor.copy(),
            "target_critic": self.target_critic.copy(),
        }

    def restore(self, snap: dict) -> None:
        self.actor = snap["actor"].copy()
        self.critic = snap["critic"].copy()
        self.target_actor = snap["target_actor"].copy()
        self.target_critic = snap["target_critic"].copy()
        self.opt_actor = Adam(self.actor.parameters(), self.config.learning_rate)
        self.opt_critic = Adam(self.critic.parameters(), self.config.learning_rate)


class DdpgPolicy:
    """state -> acceleration wrapper around a (frozen) actor network."""

    def __init__(self, actor: DenseNet, rt_window: int):
        self.actor = actor
        self.window = StateWindow(rt_window)
        self.window.reset(env.CFState(0.0, 0.0, 10.0))

    def reset(self, s0: env.CFState) -> None:
        self.window.reset(s0)

    def __call__(self, s: env.CFState) -> float:
        x = self.window.observe(s)
        out = float(self.actor.forward(x)[0])
        return env.ACTION_BOUND * out


# ---------------------------------------------------------------------------
# training loops


def _observed_value(period: CFPeriod, t: int, mode: str) -> float:
    raw = period.gap[t] if mode == "spacing" else period.v_follow[t]
    return max(float(raw), OBS_FLOOR)


def _simulated_value(state: env.CFState, mode: str) -> float:
    return state.gap if mode == "spacing" else state.v_follow


def _rollout_training_episode(agent: DdpgAgent, period: CFPeriod) -> list[float]:
    """One exploratory pass over a period, storing transitions and doing
    one learning step per environment step once the buffer is warm."""
    cfg = agent.config
    dt = period.dt
    state = env.CFState(
        float(period.v_follow[0]),
        float(period.v_lead[0]) - float(period.v_follow[0]),
        float(period.gap[0]),
    )
    window = StateWindow(cfg.rt_window)
    window.reset(state)
    agent.noise.reset()
    x = window.observe(state)

    rewards = []
    for t in range(len(period) - 1):
        a = agent.select_action(x, explore=True)
        state_next = env.step_state(state, a, float(period.v_lead[t + 1]), dt)
        collided = state_next.gap <= 0.0
        if collided:
            r = collision_reward(cfg.gamma)
        else:
            r = reward(
                _simulated_value(state_next, cfg.reward_mode),
                _observed_value(period, t + 1, cfg.reward_mode),
            )
        x_next = window.observe(state_next)
        agent.replay.push(x, a, r, x_next, collided)
        rewards.append(r)

        if len(agent.replay) >= cfg.replay_start:
            agent.train_step(agent.replay.sample(cfg.minibatch, agent.sample_rng))
        if collided:
            break
        state, x = state_next, x_next
    return rewards


@dataclass
class LearningCurves:
    rows: list[dict] = field(default_factory=list)

    def add(self, episode, reward_mean, rmspe_train, rmspe_test):
        self.rows.append(
            {
                "episode": int(episode),
                "reward_mean": float(reward_mean),
                "rmspe_train": float(rmspe_train),
                "rmspe_test": float(rmspe_test),
            }
        )

    def save_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["episode", "reward_mean", "rmspe_train", "rmspe_test"])
            for r in self.rows:
                w.writerow(
                    [r["episode"], format(r["reward_mean"], ".17g"),
                     format(r["rmspe_train"], ".17g"), format(r["rmspe_test"], ".17g")]
                )


def _train_loop(agent, calib_periods, valid_periods, config) -> LearningCurves:
    curves = LearningCurves()
    best = None
    for episode in range(1, config.episodes + 1):
        all_rewards = []
        for period in calib_periods:
            all_rewards.extend(_rollout_training_episode(agent, period))
        rmspe_train = spacing_rmspe(agent.policy(), calib_periods)
        rmspe_test = spacing_rmspe(agent.policy(), valid_periods)
        curves.add(episode, float(np.mean(all_rewards)), rmspe_train, rmspe_test)
        total = rmspe_train + rmspe_test
        if best is None or total < best[0]:
            best = (total, agent.snapshot())
    if best is not None:
        agent.restore(best[1])
    return curves


def train(calib_periods, valid_periods, config: TrainConfig, seed: int = 0):
    """Train a fresh agent; returns (agent at its best snapshot, curves).

    The best snapshot is the episode end minimizing the sum of spacing
    RMSPE on the calibration and validation sets.
    """
    if not calib_periods:
        raise ValueError("calibration set is empty")
    agent = DdpgAgent(config, seed=seed)
    curves = _train_loop(agent, calib_periods, valid_periods, config)
    return agent, curves


def retrain(agent: DdpgAgent, calib_periods, valid_periods, config: TrainConfig | None = None,
            seed: int = 0):
    """Adapt a trained agent to a new driver.

    The replay buffer is cleared so that only the new driver's experience
    is learned from; network weights carry over unchanged.
    """
    if not calib_periods:
        raise ValueError("calibration set is empty")
    config = config or agent.config
    if config.rt_window != agent.config.rt_window or config.reward_mode != agent.config.reward_mode:
        raise ValueError("retraining cannot change the model variant")
    agent.config = config
    agent.replay = ReplayBuffer(config.replay_capacity, agent.input_dim)
    agent.reseed(seed)
    agent.opt_actor = Adam(agent.actor.parameters(), config.learning_rate)
    agent.opt_critic = Adam(agent.critic.parameters(), config.learning_rate)
    curves = _train_loop(agent, calib_periods, valid_periods, config)
    return agent, curves


# ---------------------------------------------------------------------------
# persistence


def save_ddpg(agent: DdpgAgent, path) -> None:
    doc = {
        "version": 1,
        "kind": "ddpg",
        "config": asdict(agent.config),
        "driver_id": agent.driver_id,
        "split_seed": agent.split_seed,
        "normalization": {"v": 30.0, "dv": 10.0, "gap": 100.0},
        "actor": net_to_dict(agent.actor),
        "critic": net_to_dict(agent.critic),
        "target_actor": net_to_dict(agent.target_actor),
        "target_critic": net_to_dict(agent.target_critic),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_ddpg(path) -> DdpgAgent:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "ddpg":
        raise ValueError(f"{path} is not a DDPG model file")
    config = TrainConfig(**doc["config"])
    agent = DdpgAgent(config, seed=0)
    agent.actor = net_from_dict(doc["actor"])
    agent.critic = net_from_dict(doc["critic"])
    agent.target_actor = net_from_dict(doc["target_actor"])
    agent.target_critic = net_from_dict(doc["target_critic"])
    agent.opt_actor = Adam(agent.actor.parameters(), config.learning_rate)
    agent.opt_critic = Adam(agent.critic.parameters(), config.learning_rate)
    agent.driver_id = doc.get("driver_id", "")
    agent.split_seed = doc.get("split_seed")
    return agent
