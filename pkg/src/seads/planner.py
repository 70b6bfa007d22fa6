"""Breadth-first planning over skills with a determinised forward model, and plan execution."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol, Union

import numpy as np

from .embedding import EnvConfig, EnvState, Policy, apply_skill


class SuccessorModel(Protocol):
    K: int

    def successor(self, z0: np.ndarray, k) -> np.ndarray: ...


class Outcome(str, Enum):
    SUCCESS = "success"
    NO_PLAN_FOUND = "no_plan_found"
    WALL_TIME_EXCEEDED = "wall_time_exceeded"
    EXECUTION_FAILED = "execution_failed"


@dataclass
class Plan:
    skills: list[int]
    states: list[np.ndarray]  # predicted symbolic state after each skill
    expansions: int = 0

    def __len__(self):
        return len(self.skills)


@dataclass
class PlanFailure:
    outcome: Outcome
    expansions: int = 0


def _key(z: np.ndarray) -> bytes:
    return np.asarray(z, dtype=np.uint8).tobytes()


def bfs_plan(
    model: SuccessorModel,
    z0: np.ndarray,
    goal: np.ndarray,
    wall_time_limit: float = 60.0,
    max_depth: int = 12,
    chunk: int = 256,
) -> Union[Plan, PlanFailure]:
    """Shortest skill sequence from ``z0`` to ``goal`` under ``model.successor``.

    Nodes are expanded level by level in FIFO order, children in ascending
    skill order; the first child equal to the goal ends the search.
    """
    start = time.monotonic()
    z0 = np.asarray(z0, dtype=np.uint8)
    goal_key = _key(goal)
    root = _key(z0)
    if root == goal_key:
        return Plan([], [])
    K = model.K
    parent: dict[bytes, tuple[Optional[bytes], int]] = {root: (None, -1)}
    states: dict[bytes, np.ndarray] = {root: z0}
    frontier = [root]
    expansions = 0
    for _ in range(max_depth):
        nxt = []
        for lo in range(0, len(frontier), chunk):
            if time.monotonic() - start > wall_time_limit:
                return PlanFailure(Outcome.WALL_TIME_EXCEEDED, expansions)
            keys = frontier[lo : lo + chunk]
            Z = np.repeat(np.array([states[k] for k in keys]), K, axis=0)
            ks = np.tile(np.arange(K), len(keys))
            children = np.asarray(model.successor(Z, ks), dtype=np.uint8)
            expansions += len(keys)
            for i, child in enumerate(children):
                ck = child.tobytes()
                if ck in parent:
                    continue
                parent[ck] = (keys[i // K], i % K)
                states[ck] = child
                if ck == goal_key:
                    return _backtrack(parent, states, ck, expansions)
                nxt.append(ck)
        if not nxt:
            break
        frontier = nxt
    return PlanFailure(Outcome.NO_PLAN_FOUND, expansions)


def _backtrack(parent, states, key, expansions) -> Plan:
    skills, zs = [], []
    while parent[key][0] is not None:
        prev, k = parent[key]
        skills.append(k)
        zs.append(states[key])
        key = prev
    return Plan(skills[::-1], zs[::-1], expansions)


@dataclass
class PlanResult:
    outcome: Outcome
    skills_executed: int = 0
    replans: int = 0
    env_steps: int = 0
    planning_time: float = 0.0
    trace: list = field(default_factory=list)  # (skill, predicted z, actual z) per execution

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def solve_task(
    env: EnvConfig,
    policy: Policy,
    model: SuccessorModel,
    state: EnvState,
    goal: np.ndarray,
    replan: bool,
    rng: np.random.Generator,
    wall_time_limit: float = 60.0,
    max_depth: int = 12,
    replan_budget: int = 10,
) -> PlanResult:
    """Plan with BFS and execute skills; optionally replan when a prediction misses.

    ``wall_time_limit`` bounds the total planning time of the task.
    """
    goal = np.asarray(goal, dtype=np.uint8)
    result = PlanResult(Outcome.EXECUTION_FAILED)
    z = state.symbolic
    while True:
        t0 = time.monotonic()
        plan = bfs_plan(model, z, goal, wall_time_limit - result.planning_time, max_depth)
        result.planning_time += time.monotonic() - t0
        if isinstance(plan, PlanFailure):
            result.outcome = plan.outcome
            return result
        mismatch = False
        for k, predicted in zip(plan.skills, plan.states):
            state, record = apply_skill(env, policy, state, k, rng)
            z = record.zT
            result.skills_executed += 1
            result.env_steps += record.length
            result.trace.append((k, predicted, z))
            if replan and not np.array_equal(z, predicted):
                mismatch = True
                break
        if np.array_equal(z, goal):
            result.outcome = Outcome.SUCCESS
            return result
        if not replan or not mismatch or result.replans >= replan_budget:
            result.outcome = Outcome.EXECUTION_FAILED
            return result
        result.replans += 1
