"""Cursor manipulator with an embedded board game.

The cursor lives on the unit square; ``x`` indexes board columns and ``y``
board rows. Each step displaces the cursor by up to ``max_displacement`` per
axis and, if the trigger action exceeds the threshold, attempts a game move at
the new position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import boardgames as bg

SYMBOLIC_CHANGE = "symbolic_change"
STEP_LIMIT = "step_limit"

ACTION_DIM = 3


@dataclass(frozen=True)
class EnvConfig:
    game: str = bg.LIGHTSOUT
    board_size: int = 5
    max_displacement: float = 0.2
    step_limit: int = 10
    trigger_threshold: float = 0.0
    # half-diagonal of the TileSwap swap rhombus, as a fraction of a field's edge
    swap_half_diagonal: float = 0.25

    def __post_init__(self):
        if self.game not in bg.GAMES:
            raise ValueError(f"unknown game {self.game!r}")
        if self.step_limit < 1:
            raise ValueError("step_limit must be >= 1")
        if self.max_displacement <= 0:
            raise ValueError("max_displacement must be positive")
        if self.game == bg.TILESWAP and self.board_size != bg.TILE_SIDE:
            object.__setattr__(self, "board_size", bg.TILE_SIDE)

    @property
    def symbolic_dim(self) -> int:
        return bg.symbolic_dim(self.game, self.board_size)

    @property
    def obs_dim(self) -> int:
        return 2 + self.symbolic_dim

    @property
    def moves(self) -> tuple[bg.GameMove, ...]:
        return bg.enumerate_moves(self.game, self.board_size)

    def goal(self) -> bg.Board:
        return bg.goal_board(self.game, self.board_size)


@dataclass(frozen=True)
class EnvState:
    x: float
    y: float
    board: bg.Board

    @property
    def symbolic(self) -> np.ndarray:
        return bg.to_symbolic(self.board)

    def observation(self) -> np.ndarray:
        return np.concatenate(([self.x, self.y], bg.to_symbolic(self.board))).astype(np.float64)


@dataclass
class StepResult:
    next_state: EnvState
    symbolic_changed: bool
    steps_taken: int = 1
    move: Optional[bg.GameMove] = None


@dataclass
class EpisodeRecord:
    """One skill rollout: observations s_0..s_T, actions a_0..a_{T-1}."""

    observations: np.ndarray
    actions: np.ndarray
    k: int
    z0: np.ndarray
    zT: np.ndarray
    cause: str
    moves: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def changed(self) -> bool:
        return bool(np.any(self.z0 != self.zT))

    def with_skill(self, k: int) -> "EpisodeRecord":
        return EpisodeRecord(self.observations, self.actions, int(k), self.z0, self.zT, self.cause, self.moves)


# policy(observation, k, rng) -> raw action of length 3
Policy = Callable[[np.ndarray, int, np.random.Generator], np.ndarray]


def reset(config: EnvConfig, rng: np.random.Generator, board: bg.Board) -> EnvState:
    if board.game != config.game or bg.board_size(board) != config.board_size:
        raise ValueError("board does not match the environment's game")
    x, y = rng.random(2)
    return EnvState(float(x), float(y), board)


def field_at(config: EnvConfig, x: float, y: float) -> tuple[int, int]:
    """(row, col) of the cell containing the position; the top edge closes the last cell."""
    n = config.board_size
    col = min(int(x * n), n - 1)
    row = min(int(y * n), n - 1)
    return row, col


def move_at(config: EnvConfig, x: float, y: float) -> Optional[bg.GameMove]:
    if config.game == bg.LIGHTSOUT:
        return field_at(config, x, y)
    edge = 1.0 / bg.TILE_SIDE
    h = config.swap_half_diagonal * edge
    for a, b in bg.enumerate_moves(bg.TILESWAP):
        ra, ca = divmod(a, bg.TILE_SIDE)
        rb, cb = divmod(b, bg.TILE_SIDE)
        # midpoint of the shared edge, in (x, y) = (col, row) coordinates
        mx = (ca + cb + 1) * edge / 2.0
        my = (ra + rb + 1) * edge / 2.0
        if abs(x - mx) + abs(y - my) <= h:
            return (a, b)
    return None


def step(state: EnvState, action: np.ndarray, config: EnvConfig) -> StepResult:
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    x = min(max(state.x + config.max_displacement * float(a[0]), 0.0), 1.0)
    y = min(max(state.y + config.max_displacement * float(a[1]), 0.0), 1.0)
    board = state.board
    move = None
    if a[2] > config.trigger_threshold:
        move = move_at(config, x, y)
        if move is not None:
            board = bg.apply_move(board, move)
    changed = board != state.board
    return StepResult(EnvState(x, y, board), changed, 1, move if changed else None)


def apply_skill(
    config: EnvConfig,
    policy: Policy,
    state: EnvState,
    k: int,
    rng: np.random.Generator,
) -> tuple[EnvState, EpisodeRecord]:
    """Run skill ``k`` until the symbolic state changes or the step limit is hit."""
    z0 = state.symbolic
    observations = [state.observation()]
    actions = []
    moves = []
    cause = STEP_LIMIT
    for _ in range(config.step_limit):
        action = np.asarray(policy(observations[-1], k, rng), dtype=np.float64)
        result = step(state, action, config)
        state = result.next_state
        actions.append(action)
        observations.append(state.observation())
        if result.move is not None:
            moves.append(result.move)
        if result.symbolic_changed:
            cause = SYMBOLIC_CHANGE
            break
    record = EpisodeRecord(
        observations=np.array(observations),
        actions=np.array(actions).reshape(-1, ACTION_DIM),
        k=int(k),
        z0=z0,
        zT=state.symbolic,
        cause=cause,
        moves=moves,
    )
    return state, record
