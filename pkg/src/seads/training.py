"""SEADS training loop: episode collection, intrinsic reward, relabelling, updates."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import boardgames as bg
from .assignment import hungarian
from .embedding import (
    ACTION_DIM,
    STEP_LIMIT,
    SYMBOLIC_CHANGE,
    EnvConfig,
    EpisodeRecord,
    apply_skill,
    reset,
)
from .neural import NonFiniteError
from .sac import Batch, SacAgent, SacConfig, with_skill
from .skillmodel import ForwardModel, SkillDiscriminator

log = logging.getLogger(__name__)

SkillModel = Union[ForwardModel, SkillDiscriminator]

METRIC_FIELDS = (
    "epoch",
    "env_steps",
    "episodes",
    "critic_loss",
    "actor_loss",
    "model_loss",
    "mean_reward",
    "mean_episode_length",
    "change_fraction",
    "long_buffer",
    "recent_buffer",
)


@dataclass(frozen=True)
class RewardConfig:
    K: int
    second_best_norm: bool = True
    novelty_bonus: bool = True

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")

    @property
    def clip_floor(self) -> float:
        return -2.0 * math.log(self.K)


def intrinsic_reward(
    log_post: np.ndarray,
    k: np.ndarray,
    cfg: RewardConfig,
    max_log_lik: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Final-transition reward for each row of ``log_post`` (shape (B, K)).

    ``max_log_lik`` is ``max_k' log q(z_T | z_0, k')`` and is required when the
    novelty bonus is enabled.
    """
    log_post = np.atleast_2d(log_post)
    k = np.atleast_1d(k)
    q_bar = np.maximum(log_post, cfg.clip_floor)
    own = q_bar[np.arange(len(k)), k]
    if cfg.second_best_norm:
        second = np.sort(q_bar, axis=1)[:, -2]
        base = own - second
    else:
        base = own + math.log(cfg.K)
    if cfg.novelty_bonus:
        if max_log_lik is None:
            raise ValueError("novelty bonus needs the forward-model likelihoods")
        base = base - np.atleast_1d(max_log_lik)
    return base


def compute_reward(z0, zT, k: int, model: ForwardModel, cfg: RewardConfig) -> float:
    ll = model.log_likelihoods(z0, zT)
    log_post = ll - np.logaddexp.reduce(ll, axis=1, keepdims=True)
    return float(intrinsic_reward(log_post, np.array([k]), cfg, ll.max(axis=1))[0])


def relabel(labels: Sequence[int], log_post: np.ndarray, relabelable: Optional[np.ndarray] = None) -> np.ndarray:
    """Skill labels maximising sum of log q(k_i | ...) with the label multiset fixed.

    Only rows flagged ``relabelable`` take part; each of their original labels
    becomes one assignment slot, and the Hungarian method matches episodes to
    slots at cost ``-log_post``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    out = labels.copy()
    rows = np.arange(len(labels)) if relabelable is None else np.flatnonzero(relabelable)
    if len(rows) == 0:
        return out
    slots = np.sort(labels[rows])
    cost = -np.asarray(log_post, dtype=np.float64)[rows][:, slots]
    out[rows] = slots[hungarian(cost)]
    return out


class EpisodeBuffers:
    def __init__(self, long_capacity: int = 2048, recent_capacity: int = 256):
        self.long: deque[EpisodeRecord] = deque(maxlen=long_capacity)
        self.recent: deque[EpisodeRecord] = deque(maxlen=recent_capacity)

    def extend(self, episodes: Sequence[EpisodeRecord]) -> None:
        self.long.extend(episodes)
        self.recent.extend(episodes)

    def training_set(self, size: int, rng: np.random.Generator) -> list[EpisodeRecord]:
        """A uniform sample (without replacement) of the long buffer plus all recent episodes."""
        n = len(self.long)
        idx = np.sort(rng.choice(n, size=min(size, n), replace=False)) if n else []
        return [self.long[int(i)] for i in idx] + list(self.recent)


@dataclass(frozen=True)
class TrainConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    K: int = 25
    total_env_steps: int = 500_000
    episodes_per_epoch: int = 32
    long_buffer: int = 2048
    recent_buffer: int = 256
    sample_size: int = 256
    fm_relabel_fraction: float = 1.0
    sac_relabel_fraction: float = 0.5
    sac_updates: int = 16
    sac_batch: int = 128
    fm_updates: int = 4
    fm_batch: int = 32
    fm_lr: float = 1e-3
    fm_hidden: tuple[int, ...] = (256, 256)
    sac: SacConfig = field(default_factory=lambda: SacConfig(bootstrap_timeouts=False))
    second_best_norm: bool = True
    novelty_bonus: bool = True
    discriminator: bool = False
    max_board_depth: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "total_env_steps", "episodes_per_epoch", "long_buffer", "recent_buffer",
                     "sample_size", "sac_batch", "fm_batch", "max_board_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("sac_updates", "fm_updates"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("fm_relabel_fraction", "sac_relabel_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.discriminator and self.novelty_bonus:
            raise ValueError("the novelty bonus needs a forward model; disable it for the discriminator")

    @property
    def reward(self) -> RewardConfig:
        return RewardConfig(self.K, self.second_best_norm, self.novelty_bonus)


def skill_policy(agent: SacAgent, K: int, deterministic: bool = False) -> Callable:
    def policy(obs, k, rng):
        return agent.act(with_skill(obs, k, K), rng, deterministic=deterministic)

    return policy


def collect_episode(
    env: EnvConfig, agent: SacAgent, K: int, k: int, board: bg.Board, rng: np.random.Generator
) -> EpisodeRecord:
    state = reset(env, rng, board)
    _, record = apply_skill(env, skill_policy(agent, K), state, k, rng)
    return record


def episode_transitions(episodes: Sequence[EpisodeRecord], rewards: np.ndarray, K: int) -> Batch:
    """Flatten episodes into SAC transitions; only the last one of each is rewarded."""
    obs, acts, rews, nxt, term, tout = [], [], [], [], [], []
    for ep, r in zip(episodes, rewards):
        T = ep.length
        o = with_skill(ep.observations, ep.k, K)
        obs.append(o[:-1])
        nxt.append(o[1:])
        acts.append(ep.actions)
        rr = np.zeros(T)
        rr[-1] = r
        rews.append(rr)
        t = np.zeros(T, dtype=bool)
        to = np.zeros(T, dtype=bool)
        t[-1] = ep.cause == SYMBOLIC_CHANGE
        to[-1] = ep.cause == STEP_LIMIT
        term.append(t)
        tout.append(to)
    return Batch(
        np.concatenate(obs), np.concatenate(acts), np.concatenate(rews), np.concatenate(nxt),
        np.concatenate(term), np.concatenate(tout),
    )


def _stack(episodes: Sequence[EpisodeRecord]):
    z0 = np.array([e.z0 for e in episodes], dtype=np.float64)
    zT = np.array([e.zT for e in episodes], dtype=np.float64)
    k = np.array([e.k for e in episodes], dtype=np.int64)
    return z0, zT, k


class Trainer:
    """Holds agent, skill model, buffers and RNG; one call to :meth:`train_epoch` per epoch."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.env = cfg.env
        self.rng = np.random.default_rng(cfg.seed)
        init_rng = np.random.default_rng([cfg.seed, 1])
        D = self.env.symbolic_dim
        self.agent = SacAgent(self.env.obs_dim + cfg.K, ACTION_DIM, cfg.sac, init_rng)
        if cfg.discriminator:
            self.model: SkillModel = SkillDiscriminator(D, cfg.K, cfg.fm_hidden, cfg.fm_lr, init_rng)
        else:
            self.model = ForwardModel(D, cfg.K, cfg.fm_hidden, cfg.fm_lr, init_rng)
        self.buffers = EpisodeBuffers(cfg.long_buffer, cfg.recent_buffer)
        self.env_steps = 0
        self.epoch = 0
        self.history: list[dict] = []

    # --- pieces -------------------------------------------------------------

    def sample_board(self, rng: np.random.Generator) -> bg.Board:
        depth = int(rng.integers(1, self.cfg.max_board_depth + 1))
        return bg.generate_board(self.env.game, depth, rng, split="train", n=self.env.board_size)

    def collect(self) -> list[EpisodeRecord]:
        cfg = self.cfg
        ks = self.rng.integers(cfg.K, size=cfg.episodes_per_epoch)
        seeds = self.rng.integers(2**63, size=cfg.episodes_per_epoch)
        episodes = []
        # each episode owns an independent stream, so collection order is irrelevant
        for k, seed in zip(ks, seeds):
            erng = np.random.default_rng(int(seed))
            board = self.sample_board(erng)
            episodes.append(collect_episode(self.env, self.agent, cfg.K, int(k), board, erng))
        return episodes

    def scores(self, episodes: Sequence[EpisodeRecord]):
        """(log posterior (B, K), max log-likelihood (B,) or None)."""
        z0, zT, _ = _stack(episodes)
        if isinstance(self.model, ForwardModel):
            ll = self.model.log_likelihoods(z0, zT)
            log_post = ll - np.logaddexp.reduce(ll, axis=1, keepdims=True)
            return log_post, ll.max(axis=1)
        return self.model.posterior(z0, zT), None

    def relabel_episodes(self, episodes, fraction: float, log_post: np.ndarray) -> list[EpisodeRecord]:
        flags = self.rng.random(len(episodes)) < fraction
        changed = np.array([e.changed for e in episodes], dtype=bool)
        labels = np.array([e.k for e in episodes])
        new = relabel(labels, log_post, flags & changed)
        return [e if e.k == k else e.with_skill(k) for e, k in zip(episodes, new)]

    def update_model(self) -> float:
        cfg = self.cfg
        episodes = self.buffers.training_set(cfg.sample_size, self.rng)
        if cfg.fm_relabel_fraction > 0:
            log_post, _ = self.scores(episodes)
            episodes = self.relabel_episodes(episodes, cfg.fm_relabel_fraction, log_post)
        z0, zT, k = _stack(episodes)
        losses = []
        for _ in range(cfg.fm_updates):
            idx = self.rng.integers(len(episodes), size=cfg.fm_batch)
            losses.append(self.model.update(z0[idx], k[idx], zT[idx]))
        return float(np.mean(losses)) if losses else float("nan")

    def update_agent(self) -> tuple[float, float, float]:
        cfg = self.cfg
        episodes = self.buffers.training_set(cfg.sample_size, self.rng)
        log_post, max_ll = self.scores(episodes)
        if cfg.sac_relabel_fraction > 0:
            labels_before = np.array([e.k for e in episodes])
            episodes = self.relabel_episodes(episodes, cfg.sac_relabel_fraction, log_post)
            assert sorted(labels_before) == sorted(e.k for e in episodes)
        k = np.array([e.k for e in episodes])
        rewards = intrinsic_reward(log_post, k, cfg.reward, max_ll)
        if not np.all(np.isfinite(rewards)):
            raise NonFiniteError("non-finite intrinsic reward")
        transitions = episode_transitions(episodes, rewards, cfg.K)
        critic, actor = [], []
        for _ in range(cfg.sac_updates):
            idx = self.rng.integers(len(transitions), size=cfg.sac_batch)
            batch = Batch(
                transitions.obs[idx], transitions.actions[idx], transitions.rewards[idx],
                transitions.next_obs[idx], transitions.terminals[idx], transitions.timeouts[idx],
            )
            m = self.agent.update(batch, self.rng)
            critic.append(m["critic_loss"])
            actor.append(m["actor_loss"])
        nan = float("nan")
        return (
            float(np.mean(critic)) if critic else nan,
            float(np.mean(actor)) if actor else nan,
            float(np.mean(rewards)),
        )

    # --- loop ---------------------------------------------------------------

    def train_epoch(self) -> dict:
        episodes = self.collect()
        self.buffers.extend(episodes)
        self.env_steps += sum(e.length for e in episodes)
        model_loss = self.update_model()
        critic_loss, actor_loss, mean_reward = self.update_agent()
        self.epoch += 1
        row = {
            "epoch": self.epoch,
            "env_steps": self.env_steps,
            "episodes": len(episodes),
            "critic_loss": critic_loss,
            "actor_loss": actor_loss,
            "model_loss": model_loss,
            "mean_reward": mean_reward,
            "mean_episode_length": float(np.mean([e.length for e in episodes])),
            "change_fraction": float(np.mean([e.changed for e in episodes])),
            "long_buffer": len(self.buffers.long),
            "recent_buffer": len(self.buffers.recent),
        }
        self.history.append(row)
        return row

    def train(self, on_epoch: Optional[Callable[["Trainer", dict], None]] = None) -> list[dict]:
        while self.env_steps < self.cfg.total_env_steps:
            row = self.train_epoch()
            if on_epoch is not None:
                on_epoch(self, row)
            if self.epoch % 50 == 0:
                log.info("epoch %d steps %d reward %.3f model %.3f", self.epoch, self.env_steps,
                         row["mean_reward"], row["model_loss"])
        return self.history

    def policy(self, deterministic: bool = True) -> Callable:
        return skill_policy(self.agent, self.cfg.K, deterministic)


def train(cfg: TrainConfig, on_epoch=None) -> tuple[SacAgent, SkillModel, list[dict]]:
    trainer = Trainer(cfg)
    history = trainer.train(on_epoch)
    return trainer.agent, trainer.model, history
