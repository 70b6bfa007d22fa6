"""Flat SAC on the full environment state with sparse task reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .. import boardgames as bg
from ..embedding import ACTION_DIM, EnvConfig, EnvState, reset, step
from ..planner import Outcome
from ..sac import SacAgent, SacConfig, TransitionBuffer
from .evaluation import EvalReport, Task, TaskResult

BASELINE_FIELDS = (
    "epoch",
    "env_steps",
    "episodes",
    "successes",
    "success_rate",
    "critic_loss",
    "actor_loss",
)

STEPS_PER_DEPTH = 10


def step_budget(depth: int) -> int:
    return STEPS_PER_DEPTH * depth


@dataclass(frozen=True)
class BaselineConfig:
    env: EnvConfig
    total_env_steps: int = 500_000
    batch_size: int = 256
    buffer_size: int = 1_000_000
    samples_per_epoch: int = 8
    updates_per_epoch: int = 1
    sac: SacConfig = SacConfig(hidden=(512, 512, 512))
    max_board_depth: int = 5
    log_every: int = 100
    seed: int = 0


@dataclass
class _Episode:
    state: EnvState
    depth: int
    t: int = 0


class FlatSacTrainer:
    """Interleaves ``samples_per_epoch`` environment steps with SAC updates."""

    def __init__(self, cfg: BaselineConfig):
        self.cfg = cfg
        self.env = cfg.env
        self.goal = cfg.env.goal()
        self.rng = np.random.default_rng(cfg.seed)
        self.agent = SacAgent(self.env.obs_dim, ACTION_DIM, cfg.sac, np.random.default_rng([cfg.seed, 1]))
        self.buffer = TransitionBuffer(cfg.buffer_size, self.env.obs_dim, ACTION_DIM)
        self.episode: Optional[_Episode] = None
        self.env_steps = 0
        self.epoch = 0
        self.episodes = 0
        self.successes = 0
        self.history: list[dict] = []
        self._window = {"episodes": 0, "successes": 0, "critic": [], "actor": []}

    def _start_episode(self) -> None:
        while True:
            depth = int(self.rng.integers(1, self.cfg.max_board_depth + 1))
            board = bg.generate_board(self.env.game, depth, self.rng, split="train", n=self.env.board_size)
            state = reset(self.env, self.rng, board)
            if board != self.goal:
                self.episode = _Episode(state, depth)
                return
            # a board that is already solved counts as an immediate success
            self._finish(True)

    def _finish(self, solved: bool) -> None:
        self.episodes += 1
        self.successes += int(solved)
        self._window["episodes"] += 1
        self._window["successes"] += int(solved)
        self.episode = None

    def env_step(self) -> None:
        if self.episode is None:
            self._start_episode()
        ep = self.episode
        obs = ep.state.observation()
        action = self.agent.act(obs, self.rng)
        result = step(ep.state, action, self.env)
        ep.state = result.next_state
        ep.t += 1
        self.env_steps += 1
        solved = ep.state.board == self.goal
        timeout = not solved and ep.t >= step_budget(ep.depth)
        self.buffer.add(obs, action, 1.0 if solved else 0.0, ep.state.observation(), solved, timeout)
        if solved or timeout:
            self._finish(solved)

    def train_epoch(self) -> Optional[dict]:
        for _ in range(self.cfg.samples_per_epoch):
            self.env_step()
        if len(self.buffer) >= self.cfg.batch_size:
            for _ in range(self.cfg.updates_per_epoch):
                m = self.agent.update(self.buffer.sample(self.cfg.batch_size, self.rng), self.rng)
                self._window["critic"].append(m["critic_loss"])
                self._window["actor"].append(m["actor_loss"])
        self.epoch += 1
        if self.epoch % self.cfg.log_every and self.env_steps < self.cfg.total_env_steps:
            return None
        w = self._window
        nan = float("nan")
        row = {
            "epoch": self.epoch,
            "env_steps": self.env_steps,
            "episodes": w["episodes"],
            "successes": w["successes"],
            "success_rate": w["successes"] / w["episodes"] if w["episodes"] else nan,
            "critic_loss": float(np.mean(w["critic"])) if w["critic"] else nan,
            "actor_loss": float(np.mean(w["actor"])) if w["actor"] else nan,
        }
        self._window = {"episodes": 0, "successes": 0, "critic": [], "actor": []}
        self.history.append(row)
        return row

    def train(self, on_row: Optional[Callable[["FlatSacTrainer", dict], None]] = None) -> list[dict]:
        while self.env_steps < self.cfg.total_env_steps:
            row = self.train_epoch()
            if row is not None and on_row is not None:
                on_row(self, row)
        return self.history


def run_flat_episode(env: EnvConfig, agent: SacAgent, task: Task, rng: np.random.Generator) -> TaskResult:
    """Deterministic rollout of the flat policy within the depth-scaled step budget."""
    goal = env.goal()
    state = reset(env, rng, task.board)
    steps = 0
    while state.board != goal and steps < step_budget(task.depth):
        state = step(state, agent.act(state.observation(), deterministic=True), env).next_state
        steps += 1
    outcome = Outcome.SUCCESS if state.board == goal else Outcome.EXECUTION_FAILED
    return TaskResult(task, outcome, env_steps=steps)


def eval_flat(env: EnvConfig, agent: SacAgent, tasks: Sequence[Task], seed: int = 0) -> EvalReport:
    results = [run_flat_episode(env, agent, t, np.random.default_rng([seed, 17, t.index])) for t in tasks]
    return EvalReport(results, replan=False)
