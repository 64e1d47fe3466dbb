"""DDPG with a FIFO replay buffer, target networks and epsilon-uniform exploration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infoflow.nn import (Adam, MlpNet, NumericError, backward, forward, forward_cached,
                         init_mlp, optimizer_step, polyak_update)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    raw_reward: float
    terminal: bool
    a_next: np.ndarray | None = None


@dataclass
class Minibatch:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    raw_reward: np.ndarray
    terminal: np.ndarray
    a_next: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.s)


class BufferNotReady(RuntimeError):
    """Sampling from an empty replay buffer; the caller skips the training step."""


class ReplayBuffer:
    """Fixed-capacity ring of transitions with strict FIFO eviction."""

    def __init__(self, capacity: int, state_dim: int = 2, action_dim: int = 2):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.empty((capacity, state_dim))
        self.a = np.empty((capacity, action_dim))
        self.s_next = np.empty((capacity, state_dim))
        self.a_next = np.full((capacity, action_dim), np.nan)
        self.raw_reward = np.empty(capacity)
        self.terminal = np.empty(capacity, dtype=bool)
        self.size = 0
        self._head = 0
        self.total_stored = 0

    def __len__(self):
        return self.size

    def store(self, t: Transition) -> None:
        i = self._head
        self.s[i] = t.s
        self.a[i] = t.a
        self.s_next[i] = t.s_next
        self.raw_reward[i] = t.raw_reward
        self.terminal[i] = t.terminal
        self.a_next[i] = np.nan if t.a_next is None else t.a_next
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_stored += 1

    def transitions(self) -> list[Transition]:
        """Contents oldest-first."""
        start = (self._head - self.size) % self.capacity
        idx = (start + np.arange(self.size)) % self.capacity
        return [Transition(self.s[i].copy(), self.a[i].copy(), self.s_next[i].copy(),
                           float(self.raw_reward[i]), bool(self.terminal[i]),
                           None if np.isnan(self.a_next[i]).any() else self.a_next[i].copy())
                for i in idx]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Minibatch:
        """Uniform sample with replacement."""
        if self.size == 0:
            raise BufferNotReady("replay buffer is empty")
        idx = rng.integers(0, self.size, size=batch_size)
        return Minibatch(self.s[idx], self.a[idx], self.s_next[idx], self.raw_reward[idx],
                         self.terminal[idx], self.a_next[idx], idx)


@dataclass
class DdpgConfig:
    gamma: float = 1.0
    tau: float = 0.005
    batch_size: int = 64
    buffer_capacity: int = 1_000_000
    epsilon: float = 0.5
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")


@dataclass(eq=False)
class Agent:
    actor: MlpNet
    critic: MlpNet
    target_actor: MlpNet
    target_critic: MlpNet
    actor_opt: Adam
    critic_opt: Adam
    state_scale: float = 40.0
    action_bound: float = 10.0

    @property
    def action_dim(self) -> int:
        return self.actor.n_outputs

    def policy(self, s) -> np.ndarray:
        """Deterministic action pi(s) for one state or a batch."""
        return forward(self.actor, np.asarray(s, dtype=np.float64) / self.state_scale)

    def target_policy(self, s) -> np.ndarray:
        return forward(self.target_actor, np.asarray(s, dtype=np.float64) / self.state_scale)

    def critic_inputs(self, s, a) -> np.ndarray:
        return np.concatenate([np.asarray(s, dtype=np.float64) / self.state_scale,
                               np.asarray(a, dtype=np.float64) / self.action_bound], axis=-1)

    def q_value(self, s, a) -> np.ndarray:
        return forward(self.critic, self.critic_inputs(s, a))[..., 0]


def make_agent(rng: np.random.Generator, cfg: DdpgConfig, state_dim: int = 2,
               action_dim: int = 2, state_scale: float = 40.0,
               action_bound: float = 10.0) -> Agent:
    actor = init_mlp((state_dim, *cfg.hidden, action_dim), rng, cfg.activation,
                     output_activation="tanh", output_scale=action_bound, final_layer_scale=3e-3)
    critic = init_mlp((state_dim + action_dim, *cfg.hidden, 1), rng, cfg.activation,
                      final_layer_scale=3e-3)
    return Agent(actor, critic, actor.copy(), critic.copy(),
                 Adam.for_net(actor, cfg.actor_lr), Adam.for_net(critic, cfg.critic_lr),
                 state_scale, action_bound)


def select_action(agent: Agent, s, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """pi(s), replaced by a uniform action from the box with probability epsilon."""
    if rng.random() < epsilon:
        return rng.uniform(-agent.action_bound, agent.action_bound, size=agent.action_dim)
    return agent.policy(s)


def critic_targets(agent: Agent, mb: Minibatch, rewards: np.ndarray, gamma: float) -> np.ndarray:
    """y = r + gamma * (1 - terminal) * Q'(s', pi'(s')), from target networks only."""
    a_next = agent.target_policy(mb.s_next)
    q_next = forward(agent.target_critic, agent.critic_inputs(mb.s_next, a_next))[:, 0]
    return rewards + gamma * (1.0 - mb.terminal) * q_next


def actor_gradient(agent: Agent, s: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean Q(s, pi(s)) over the batch and the gradient of its negation w.r.t. actor params."""
    B = len(s)
    s_in = np.asarray(s, dtype=np.float64) / agent.state_scale
    act, a_cache = forward_cached(agent.actor, s_in)
    q_pi, c_cache = forward_cached(agent.critic, agent.critic_inputs(s, act))
    objective = float(np.mean(q_pi))
    if not np.isfinite(objective):
        raise NumericError("actor: non-finite objective")
    _, dq_din = backward(agent.critic, c_cache, np.full((B, 1), -1.0 / B))
    d_act = dq_din[:, s_in.shape[1]:] / agent.action_bound
    g, _ = backward(agent.actor, a_cache, d_act)
    return objective, g


def train_step(agent: Agent, mb: Minibatch, reward_fn, cfg: DdpgConfig) -> tuple[float, float]:
    """One critic regression step, one actor ascent step, then soft target updates.

    ``reward_fn(mb)`` returns the (B,) rewards to train on. Returns the critic
    loss and the actor objective mean Q(s, pi(s)), both before the update.
    """
    rewards = np.asarray(reward_fn(mb), dtype=np.float64)
    y = critic_targets(agent, mb, rewards, cfg.gamma)
    B = len(mb)

    q, cache = forward_cached(agent.critic, agent.critic_inputs(mb.s, mb.a))
    err = q[:, 0] - y
    critic_loss = float(np.mean(err * err))
    if not np.isfinite(critic_loss):
        raise NumericError("critic: non-finite loss")
    g, _ = backward(agent.critic, cache, (2.0 / B) * err[:, None])
    optimizer_step(agent.critic, g, agent.critic_opt)

    objective, g = actor_gradient(agent, mb.s)
    optimizer_step(agent.actor, g, agent.actor_opt)

    polyak_update(agent.target_critic, agent.critic, cfg.tau)
    polyak_update(agent.target_actor, agent.actor, cfg.tau)
    return critic_loss, objective
