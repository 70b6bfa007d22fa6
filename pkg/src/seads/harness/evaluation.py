"""Evaluation protocols: distinct-move counting and planned task success."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import boardgames as bg
from ..embedding import EnvConfig, EnvState, Policy, apply_skill, reset
from ..planner import Outcome, SuccessorModel, solve_task

DEPTHS = (1, 2, 3, 4, 5)
EVAL_SPLIT = "test"
FALLBACK_SPLIT = "val"

TASK_FIELDS = ("task", "depth", "split", "board", "outcome", "success", "skills_executed", "replans", "env_steps")
SUMMARY_FIELDS = ("depth", "tasks", "successes", "success_rate")


@dataclass(frozen=True)
class Task:
    index: int
    depth: int
    split: str
    board: bg.Board


def task_split(game: str, depth: int, n: int) -> str:
    """The test split, or validation where the test split holds no board of this depth."""
    if game == bg.TILESWAP and not any(bg.split_of(b) == EVAL_SPLIT for b in bg.tileswap_sequence_boards(depth)):
        return FALLBACK_SPLIT
    return EVAL_SPLIT


def sample_tasks(game: str, n: int, per_depth: int, seed: int, depths: Sequence[int] = DEPTHS) -> list[Task]:
    rng = np.random.default_rng([seed, 7])
    tasks = []
    for depth in depths:
        split = task_split(game, depth, n)
        for _ in range(per_depth):
            tasks.append(Task(len(tasks), depth, split, bg.generate_board(game, depth, rng, split=split, n=n)))
    return tasks


# --- skill counting ------------------------------------------------------------


def first_moves(env: EnvConfig, policy: Policy, K: int, state: EnvState, rng: np.random.Generator) -> list:
    """The first game move triggered by each skill from ``state`` (None if no move)."""
    out = []
    for k in range(K):
        _, record = apply_skill(env, policy, state, k, rng)
        out.append(record.moves[0] if record.moves else None)
    return out


def count_unique_moves(env: EnvConfig, policy: Policy, K: int, states: Sequence[EnvState], rng: np.random.Generator) -> np.ndarray:
    """Distinct first-triggered moves across all K skills, one count per start state."""
    return np.array([len({m for m in first_moves(env, policy, K, s, rng) if m is not None}) for s in states])


def count_states(env: EnvConfig, n_states: int, seed: int) -> list[EnvState]:
    rng = np.random.default_rng([seed, 11])
    states = []
    for _ in range(n_states):
        depth = int(rng.integers(1, 6))
        board = bg.generate_board(env.game, depth, rng, split=task_split(env.game, depth, env.board_size), n=env.board_size)
        states.append(reset(env, rng, board))
    return states


def count_skills(env: EnvConfig, policy: Policy, K: int, n_states: int = 100, seed: int = 0) -> float:
    states = count_states(env, n_states, seed)
    return float(np.mean(count_unique_moves(env, policy, K, states, np.random.default_rng([seed, 13]))))


# --- task success ----------------------------------------------------------------


@dataclass
class TaskResult:
    task: Task
    outcome: Outcome
    skills_executed: int = 0
    replans: int = 0
    env_steps: int = 0
    planning_time: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    def row(self) -> dict:
        t = self.task
        return {
            "task": t.index,
            "depth": t.depth,
            "split": t.split,
            "board": bg.serialize(t.board),
            "outcome": self.outcome.value,
            "success": int(self.success),
            "skills_executed": self.skills_executed,
            "replans": self.replans,
            "env_steps": self.env_steps,
        }


@dataclass
class EvalReport:
    results: list[TaskResult]
    replan: bool
    mean_unique_moves: Optional[float] = None

    def success_rate(self, depth: Optional[int] = None) -> float:
        rs = [r for r in self.results if depth is None or r.task.depth == depth]
        return float(np.mean([r.success for r in rs])) if rs else float("nan")

    @property
    def depths(self) -> list[int]:
        return sorted({r.task.depth for r in self.results})

    def summary_rows(self) -> list[dict]:
        rows = []
        for d in self.depths:
            rs = [r for r in self.results if r.task.depth == d]
            wins = sum(r.success for r in rs)
            rows.append({"depth": d, "tasks": len(rs), "successes": wins, "success_rate": wins / len(rs)})
        return rows

    def wall_time_stats(self) -> dict:
        t = np.array([r.planning_time for r in self.results]) if self.results else np.zeros(1)
        return {"mean": float(t.mean()), "median": float(np.median(t)), "max": float(t.max())}


def eval_success(
    env: EnvConfig,
    policy: Policy,
    model: SuccessorModel,
    tasks: Sequence[Task],
    replan: bool,
    seed: int = 0,
    wall_time_limit: float = 60.0,
    max_depth: int = 12,
    replan_budget: int = 10,
    progress: Optional[Callable[[TaskResult], None]] = None,
) -> EvalReport:
    goal = bg.to_symbolic(env.goal())
    results = []
    for task in tasks:
        rng = np.random.default_rng([seed, 17, task.index])
        state = reset(env, rng, task.board)
        r = solve_task(env, policy, model, state, goal, replan, rng, wall_time_limit, max_depth, replan_budget)
        res = TaskResult(task, r.outcome, r.skills_executed, r.replans, r.env_steps, r.planning_time, r.trace)
        results.append(res)
        if progress is not None:
            progress(res)
    return EvalReport(results, replan)


# --- scripted reference skills ----------------------------------------------------


def move_targets(env: EnvConfig) -> list[tuple[float, float]]:
    """Cursor position that triggers each game move, in move order."""
    n = env.board_size
    if env.game == bg.LIGHTSOUT:
        return [((c + 0.5) / n, (r + 0.5) / n) for r, c in env.moves]
    side = bg.TILE_SIDE
    out = []
    for a, b in env.moves:
        (ra, ca), (rb, cb) = divmod(a, side), divmod(b, side)
        out.append(((ca + cb + 1) / (2 * side), (ra + rb + 1) / (2 * side)))
    return out


def oracle_policy(env: EnvConfig, skill_to_move: Optional[Sequence[int]] = None) -> Policy:
    """Hand-written skills: skill k walks to the trigger point of a move and presses.

    ``skill_to_move[k]`` picks the move (default: move k, skills beyond the move
    count reuse moves cyclically).
    """
    targets = move_targets(env)
    step = env.max_displacement

    def policy(obs, k, rng):
        m = skill_to_move[k] if skill_to_move is not None else k % len(targets)
        tx, ty = targets[m]
        d = np.array([tx - obs[0], ty - obs[1]])
        a = np.clip(d / step, -1.0, 1.0)
        press = 1.0 if np.all(np.abs(d) <= step) else -1.0
        return np.array([a[0], a[1], press])

    return policy
