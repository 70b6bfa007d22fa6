"""Soft actor-critic with twin critics and a fixed entropy coefficient.

Skill-conditioned use: the caller appends a one-hot skill code to the
observation before handing it to the agent (see :func:`with_skill`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .neural import (
    AdamState,
    Mlp,
    NonFiniteError,
    adam_step,
    squashed_gaussian,
    squashed_gaussian_backward,
)


@dataclass(frozen=True)
class SacConfig:
    lr: float = 3e-4
    tau: float = 0.005
    gamma: float = 0.99
    alpha: float = 0.1
    hidden: tuple[int, ...] = (512, 512)
    # False treats step-limit truncation like a terminal: no bootstrap
    bootstrap_timeouts: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    timeouts: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.rewards)


def one_hot(k, K: int) -> np.ndarray:
    k = np.asarray(k)
    out = np.zeros(k.shape + (K,))
    np.put_along_axis(out, k[..., None], 1.0, axis=-1)
    return out


def with_skill(obs: np.ndarray, k, K: int) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    code = one_hot(np.broadcast_to(np.asarray(k), obs.shape[:-1]), K)
    return np.concatenate([obs, code], axis=-1)


class SacAgent:
    def __init__(self, obs_dim: int, action_dim: int, config: SacConfig = SacConfig(), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.config = config
        h = list(config.hidden)
        self.actor = Mlp([obs_dim, *h, 2 * action_dim], rng, head="gaussian")
        self.q1 = Mlp([obs_dim + action_dim, *h, 1], rng)
        self.q2 = Mlp([obs_dim + action_dim, *h, 1], rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.actor_opt = AdamState.for_params(self.actor.params, config.lr)
        self.q1_opt = AdamState.for_params(self.q1.params, config.lr)
        self.q2_opt = AdamState.for_params(self.q2.params, config.lr)

    @property
    def networks(self) -> dict[str, Mlp]:
        return {"actor": self.actor, "q1": self.q1, "q2": self.q2, "q1_target": self.q1_target, "q2_target": self.q2_target}

    @property
    def optimizers(self) -> dict[str, AdamState]:
        return {"actor": self.actor_opt, "q1": self.q1_opt, "q2": self.q2_opt}

    def _policy(self, obs: np.ndarray):
        out, cache = self.actor.forward(obs)
        m = self.action_dim
        return out[..., :m], out[..., m:], cache

    def act(self, obs: np.ndarray, rng: Optional[np.random.Generator] = None, deterministic: bool = False) -> np.ndarray:
        mean, log_std, _ = self._policy(obs)
        if deterministic:
            return np.tanh(mean)
        noise = rng.standard_normal(mean.shape)
        return squashed_gaussian(mean, log_std, noise).action

    # --- losses ------------------------------------------------------------

    def critic_target(self, batch: Batch, noise: np.ndarray) -> np.ndarray:
        cfg = self.config
        mean, log_std, _ = self._policy(batch.next_obs)
        s = squashed_gaussian(mean, log_std, noise)
        x = np.concatenate([batch.next_obs, s.action], axis=-1)
        q_next = np.minimum(self.q1_target(x)[:, 0], self.q2_target(x)[:, 0]) - cfg.alpha * s.log_prob
        # a symbolic change ends the skill; step-limit truncation bootstraps unless disabled
        done = np.asarray(batch.terminals, dtype=bool)
        if not cfg.bootstrap_timeouts:
            done = done | np.asarray(batch.timeouts, dtype=bool)
        return batch.rewards + cfg.gamma * (~done) * q_next

    def critic_loss_and_grads(self, batch: Batch, noise: np.ndarray):
        """MSE of both critics against the soft Bellman target (target held fixed)."""
        y = self.critic_target(batch, noise)
        x = np.concatenate([batch.obs, batch.actions], axis=-1)
        n = len(batch)
        losses, grads = [], []
        for q in (self.q1, self.q2):
            pred, cache = q.forward(x)
            err = pred[:, 0] - y
            losses.append(float(np.mean(err**2)))
            g, _ = q.backward(cache, (2.0 / n) * err[:, None])
            grads.append(g)
        return losses[0] + losses[1], grads[0], grads[1]

    def actor_loss_and_grads(self, batch: Batch, noise: np.ndarray):
        """E[alpha * log pi(a|s) - min(Q1, Q2)(s, a)] with reparameterised actions."""
        alpha = self.config.alpha
        n = len(batch)
        mean, log_std, cache = self._policy(batch.obs)
        s = squashed_gaussian(mean, log_std, noise)
        x = np.concatenate([batch.obs, s.action], axis=-1)
        v1, c1 = self.q1.forward(x)
        v2, c2 = self.q2.forward(x)
        use1 = v1[:, 0] <= v2[:, 0]
        qmin = np.where(use1, v1[:, 0], v2[:, 0])
        loss = float(np.mean(alpha * s.log_prob - qmin))
        g1 = np.where(use1, -1.0 / n, 0.0)[:, None]
        g2 = np.where(use1, 0.0, -1.0 / n)[:, None]
        _, dx1 = self.q1.backward(c1, g1, need_params=False)
        _, dx2 = self.q2.backward(c2, g2, need_params=False)
        d_action = (dx1 + dx2)[:, self.obs_dim :]
        d_mean, d_log_std = squashed_gaussian_backward(s, d_action, np.full(n, alpha / n))
        grads, _ = self.actor.backward(cache, np.concatenate([d_mean, d_log_std], axis=-1))
        return loss, grads

    # --- updates -----------------------------------------------------------

    def update(self, batch: Batch, rng: np.random.Generator) -> dict[str, float]:
        """One critic step, one actor step, then a soft target update."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        m = self.action_dim
        critic_loss, g1, g2 = self.critic_loss_and_grads(batch, rng.standard_normal((len(batch), m)))
        if not np.isfinite(critic_loss):
            raise NonFiniteError(f"critic loss is {critic_loss}")
        adam_step(self.q1.params, g1, self.q1_opt)
        adam_step(self.q2.params, g2, self.q2_opt)
        actor_loss, ga = self.actor_loss_and_grads(batch, rng.standard_normal((len(batch), m)))
        if not np.isfinite(actor_loss):
            raise NonFiniteError(f"actor loss is {actor_loss}")
        adam_step(self.actor.params, ga, self.actor_opt)
        self.soft_update(self.config.tau)
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}

    def soft_update(self, tau: float) -> None:
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for p, tp in zip(online.params, target.params):
                tp *= 1.0 - tau
                tp += tau * p


class TransitionBuffer:
    """Bounded FIFO of transitions stored in ring arrays.

    Storage starts small and doubles until it reaches ``capacity``, so a large
    nominal capacity costs nothing until it is used.
    """

    _FIELDS = ("obs", "actions", "rewards", "next_obs", "terminals", "timeouts")

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, initial: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        n = min(capacity, initial)
        self.obs = np.zeros((n, obs_dim))
        self.actions = np.zeros((n, action_dim))
        self.rewards = np.zeros(n)
        self.next_obs = np.zeros((n, obs_dim))
        self.terminals = np.zeros(n, dtype=bool)
        self.timeouts = np.zeros(n, dtype=bool)
        self._next = 0
        self.size = 0

    def _reserve(self, n: int) -> None:
        # growth only happens before the ring first wraps, so slots stay in insertion order
        cur = len(self.rewards)
        if n <= cur:
            return
        new = min(self.capacity, max(n, 2 * cur))
        for name in self._FIELDS:
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:], dtype=old.dtype)
            arr[:cur] = old
            setattr(self, name, arr)

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, terminal=False, timeout=False) -> None:
        if terminal and timeout:
            raise ValueError("a transition cannot be both terminal and a timeout")
        if not np.isfinite(reward):
            raise NonFiniteError(f"reward {reward}")
        if self.size < self.capacity:
            self._reserve(self.size + 1)
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = terminal
        self.timeouts[i] = timeout
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_batch(self, batch: Batch) -> None:
        timeouts = batch.timeouts if batch.timeouts is not None else np.zeros(len(batch), dtype=bool)
        for i in range(len(batch)):
            self.add(batch.obs[i], batch.actions[i], batch.rewards[i], batch.next_obs[i], batch.terminals[i], timeouts[i])

    def _ordered(self) -> np.ndarray:
        # oldest first
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self._ordered()[rng.integers(self.size, size=batch_size)]
        return Batch(
            self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminals[idx], self.timeouts[idx]
        )

    def state_arrays(self) -> dict[str, np.ndarray]:
        idx = self._ordered()
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "terminals": self.terminals[idx],
            "timeouts": self.timeouts[idx],
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        n = len(arrays["rewards"])
        if n > self.capacity:
            raise ValueError("stored buffer exceeds capacity")
        self._reserve(n)
        for name in self._FIELDS:
            getattr(self, name)[:n] = arrays[name]
        self.size = n
        self._next = n % self.capacity
