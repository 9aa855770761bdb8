"""Deep Q-learning: replay memory, epsilon-greedy acting, TD targets and
the per-episode training loop.

Any environment exposing ``state_dim``, ``n_actions``, ``reset(demand,
seed) -> state`` and ``step(action) -> (state, reward, done, info)`` can be
trained; :class:`BanditEnv` is the minimal one used for sanity checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .config import AgentConfig


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool = False


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.ids = np.full(capacity, -1, dtype=np.int64)  # insertion index per slot
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, tr: Transition) -> None:
        if not math.isfinite(tr.r):
            raise neural.NumericError(f"non-finite reward {tr.r}")
        i = self.inserted % self.capacity
        self.states[i] = tr.s
        self.next_states[i] = tr.s_next
        self.actions[i] = tr.a
        self.rewards[i] = tr.r
        self.dones[i] = tr.done
        self.ids[i] = self.inserted
        self.inserted += 1

    def present_ids(self) -> set[int]:
        return {int(i) for i in self.ids if i >= 0}

    def sample(self, batch_size: int, rng: np.random.Generator):
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy with probability ``1 - epsilon`` (ties to the lower index)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    q = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(q.shape[0]))
    return int(np.argmax(q))


def td_targets(rewards, next_states, dones, target_params: neural.MlpParams, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("empty batch")
    q_next = neural.q_values(target_params, np.atleast_2d(next_states))
    bootstrap = np.where(np.asarray(dones, dtype=bool), 0.0, q_next.max(axis=1))
    return rewards + gamma * bootstrap


def discounted_return(rewards, gamma: float) -> float:
    total, g = 0.0, 1.0
    for r in rewards:
        total += g * r
        g *= gamma
    return total


def epsilon_at(episode: int, n_episodes: int, cfg: AgentConfig) -> float:
    """Linear decay over the first ``eps_decay_fraction`` of training."""
    horizon = cfg.eps_decay_fraction * n_episodes
    if horizon <= 0:
        return cfg.eps_end
    frac = min(1.0, episode / horizon)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


@dataclass
class DQNAgent:
    config: AgentConfig
    params: neural.MlpParams
    target_params: neural.MlpParams
    adam: neural.AdamState
    memory: ReplayMemory
    rng: np.random.Generator
    episodes_done: int = 0

    @classmethod
    def create(cls, state_dim: int, n_actions: int, config: AgentConfig, seed) -> DQNAgent:
        rng = np.random.default_rng(seed)
        sizes = (state_dim, *config.hidden, n_actions)
        params = neural.init_params(sizes, rng)
        return cls(
            config=config,
            params=params,
            target_params=params.copy(),
            adam=neural.adam_init(params),
            memory=ReplayMemory(config.memory_capacity, state_dim),
            rng=rng,
        )

    def act(self, state, epsilon: float) -> int:
        return select_action(neural.q_values(self.params, state), epsilon, self.rng)

    def learn(self) -> float:
        """One Adam step on the mean TD loss of a sampled batch."""
        cfg = self.config
        s, a, r, s2, done = self.memory.sample(cfg.batch_size, self.rng)
        y = td_targets(r, s2, done, self.target_params, cfg.gamma)
        q, cache = neural.forward(self.params, s)
        loss, dq = neural.td_loss(q, a, y)
        if not math.isfinite(loss):
            raise neural.NumericError(f"non-finite loss {loss}")
        grads = neural.backward(cache, dq)
        neural.adam_step(self.params, grads, self.adam, cfg.lr)
        return loss


@dataclass
class EpisodeLog:
    episode: int
    epsilon: float
    cumulative_reward: float
    loss: float
    avg_wait: float
    decisions: int
    demand: str = ""
    seed: int = 0
    actions: list[int] = field(default_factory=list, repr=False)


def run_training_episode(env, agent: DQNAgent, epsilon: float, demand, seed: int) -> EpisodeLog:
    """Roll out one episode, store its transitions, then update the network.

    The target network is synchronised after every ``target_sync``-th
    completed episode.
    """
    cfg = agent.config
    state = env.reset(demand, seed)
    done = getattr(env, "done", False)
    total = 0.0
    actions = []
    while not done:
        a = agent.act(state, epsilon)
        nxt, r, done, _ = env.step(a)
        agent.memory.push(Transition(state, a, r, nxt, done))
        total += r
        actions.append(a)
        state = nxt
    losses = []
    if len(agent.memory):
        for _ in range(cfg.updates_per_episode):
            losses.append(agent.learn())
    agent.episodes_done += 1
    if agent.episodes_done % cfg.target_sync == 0:
        agent.target_params.assign(agent.params)
    avg_wait = env.average_wait() if hasattr(env, "average_wait") else float("nan")
    return EpisodeLog(
        episode=agent.episodes_done,
        epsilon=epsilon,
        cumulative_reward=total,
        loss=float(np.mean(losses)) if losses else float("nan"),
        avg_wait=avg_wait,
        decisions=len(actions),
        demand=str(demand),
        seed=seed,
        actions=actions,
    )


class BanditEnv:
    """Constant-state environment where action ``i`` pays ``rewards[i]``."""

    def __init__(self, rewards=(0.0, 1.0), state_dim: int = 4, length: int = 20):
        self.payoffs = tuple(float(r) for r in rewards)
        self.n_actions = len(self.payoffs)
        self.state_dim = state_dim
        self.length = length
        self._state = np.ones(state_dim)
        self.t = 0
        self.done = False

    def reset(self, demand=None, seed: int = 0) -> np.ndarray:
        self.t = 0
        self.done = False
        return self._state.copy()

    def step(self, action: int):
        self.t += 1
        self.done = self.t >= self.length
        return self._state.copy(), self.payoffs[action], self.done, None
