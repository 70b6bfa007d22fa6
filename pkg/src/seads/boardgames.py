"""LightsOut and TileSwap rules, symbolic encoding, board generation and splits.

Boards are immutable. LightsOut cells are stored row-major; a TileSwap board
stores ``chips[f]``, the chip lying on field ``f`` of the 3x3 grid.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

LIGHTSOUT = "lightsout"
TILESWAP = "tileswap"
GAMES = (LIGHTSOUT, TILESWAP)

SPLITS = ("train", "val", "test")

TILE_SIDE = 3
NUM_TILES = TILE_SIDE * TILE_SIDE


class InvalidMove(ValueError):
    pass


class UnreachableBoard(RuntimeError):
    """The goal could not be reached from a board within the search limit."""


class BoardGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LightsBoard:
    cells: tuple[int, ...]
    n: int = 5

    def __post_init__(self):
        if len(self.cells) != self.n * self.n:
            raise ValueError(f"expected {self.n * self.n} cells, got {len(self.cells)}")
        if any(c not in (0, 1) for c in self.cells):
            raise ValueError("LightsOut cells must be 0 or 1")

    game = LIGHTSOUT

    @classmethod
    def off(cls, n: int = 5) -> "LightsBoard":
        return cls((0,) * (n * n), n)

    @property
    def grid(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.uint8).reshape(self.n, self.n)


@dataclass(frozen=True)
class TileBoard:
    chips: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.chips) != list(range(NUM_TILES)):
            raise ValueError(f"chips must be a permutation of 0..8, got {self.chips}")

    game = TILESWAP

    @classmethod
    def ordered(cls) -> "TileBoard":
        return cls(tuple(range(NUM_TILES)))


Board = Union[LightsBoard, TileBoard]
# LightsOut: (row, col). TileSwap: (field_a, field_b) with field_a < field_b.
GameMove = tuple[int, int]


def _check_game(game: str) -> None:
    if game not in GAMES:
        raise ValueError(f"unknown game {game!r}; expected one of {GAMES}")


def goal_board(game: str, n: int = 5) -> Board:
    _check_game(game)
    return LightsBoard.off(n) if game == LIGHTSOUT else TileBoard.ordered()


def board_size(board: Board) -> int:
    return board.n if isinstance(board, LightsBoard) else TILE_SIDE


def symbolic_dim(game: str, n: int = 5) -> int:
    _check_game(game)
    return n * n if game == LIGHTSOUT else NUM_TILES * NUM_TILES


@lru_cache(maxsize=None)
def enumerate_moves(game: str, n: int = 5) -> tuple[GameMove, ...]:
    """All legal moves in canonical order (row-major fields / sorted field pairs)."""
    _check_game(game)
    if game == LIGHTSOUT:
        return tuple((r, c) for r in range(n) for c in range(n))
    pairs = []
    for f in range(NUM_TILES):
        r, c = divmod(f, TILE_SIDE)
        if c + 1 < TILE_SIDE:
            pairs.append((f, f + 1))
        if r + 1 < TILE_SIDE:
            pairs.append((f, f + TILE_SIDE))
    return tuple(sorted(pairs))


def tiles_adjacent(a: int, b: int) -> bool:
    if not (0 <= a < NUM_TILES and 0 <= b < NUM_TILES):
        return False
    ra, ca = divmod(a, TILE_SIDE)
    rb, cb = divmod(b, TILE_SIDE)
    return abs(ra - rb) + abs(ca - cb) == 1


@lru_cache(maxsize=None)
def _push_masks(n: int) -> tuple[tuple[int, ...], ...]:
    masks = []
    for r in range(n):
        for c in range(n):
            idx = [r * n + c]
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < n and 0 <= cc < n:
                    idx.append(rr * n + cc)
            masks.append(tuple(sorted(idx)))
    return tuple(masks)


def lights_push(board: LightsBoard, move: GameMove) -> LightsBoard:
    r, c = move
    n = board.n
    if not (0 <= r < n and 0 <= c < n):
        raise InvalidMove(f"push {move} is outside the {n}x{n} board")
    cells = list(board.cells)
    for i in _push_masks(n)[r * n + c]:
        cells[i] ^= 1
    return LightsBoard(tuple(cells), n)


def tiles_swap(board: TileBoard, move: GameMove) -> TileBoard:
    a, b = move
    if not tiles_adjacent(a, b):
        raise InvalidMove(f"fields {a} and {b} are not non-diagonally adjacent")
    chips = list(board.chips)
    chips[a], chips[b] = chips[b], chips[a]
    return TileBoard(tuple(chips))


def apply_move(board: Board, move: GameMove) -> Board:
    if isinstance(board, LightsBoard):
        return lights_push(board, move)
    return tiles_swap(board, move)


def to_symbolic(board: Board) -> np.ndarray:
    """Binary observation: LightsOut cells row-major, TileSwap bits[9*chip + field]."""
    if isinstance(board, LightsBoard):
        return np.array(board.cells, dtype=np.uint8)
    z = np.zeros((NUM_TILES, NUM_TILES), dtype=np.uint8)
    for field, chip in enumerate(board.chips):
        z[chip, field] = 1
    return z.reshape(-1)


def from_symbolic(game: str, z: np.ndarray, n: int = 5) -> Board:
    """Inverse of :func:`to_symbolic`; raises ValueError for vectors encoding no board."""
    z = np.asarray(z).reshape(-1)
    if game == LIGHTSOUT:
        return LightsBoard(tuple(int(v) for v in z), n)
    _check_game(game)
    m = z.reshape(NUM_TILES, NUM_TILES)
    if not (np.all(m.sum(0) == 1) and np.all(m.sum(1) == 1)):
        raise ValueError("TileSwap observation is not a permutation matrix")
    chips = [0] * NUM_TILES
    for chip, field in zip(*np.nonzero(m)):
        chips[field] = int(chip)
    return TileBoard(tuple(chips))


def serialize(board: Board) -> str:
    values = board.cells if isinstance(board, LightsBoard) else board.chips
    return ",".join(str(v) for v in values)


def split_of(board: Board) -> str:
    return SPLITS[zlib.crc32(serialize(board).encode("ascii")) % 3]


# --- exhaustive search -------------------------------------------------------
#
# Moves are involutions, so the move graph is undirected and the distance from
# the goal equals the solution depth. Layers are grown lazily and memoised per
# game/size over raw tuples (cells or chips).


class _DepthIndex:
    def __init__(self, game: str, n: int):
        self.game = game
        self.n = n
        goal = goal_board(game, n)
        start = goal.cells if game == LIGHTSOUT else goal.chips
        self.depth = {start: 0}
        self.layers = [[start]]
        self.exhausted = False
        if game == LIGHTSOUT:
            masks = _push_masks(n)
            self._moves = [tuple(m) for m in masks]
        else:
            self._moves = list(enumerate_moves(TILESWAP))

    def _neighbours(self, raw: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if self.game == LIGHTSOUT:
            for mask in self._moves:
                cells = list(raw)
                for i in mask:
                    cells[i] ^= 1
                yield tuple(cells)
        else:
            for a, b in self._moves:
                chips = list(raw)
                chips[a], chips[b] = chips[b], chips[a]
                yield tuple(chips)

    def grow(self) -> bool:
        if self.exhausted:
            return False
        d = len(self.layers)
        nxt = []
        for raw in self.layers[-1]:
            for nb in self._neighbours(raw):
                if nb not in self.depth:
                    self.depth[nb] = d
                    nxt.append(nb)
        if not nxt:
            self.exhausted = True
            return False
        self.layers.append(nxt)
        return True

    def ensure(self, depth: int) -> None:
        while len(self.layers) <= depth and self.grow():
            pass


_INDEXES: dict[tuple[str, int], _DepthIndex] = {}


def _index(game: str, n: int) -> _DepthIndex:
    key = (game, n if game == LIGHTSOUT else TILE_SIDE)
    if key not in _INDEXES:
        _INDEXES[key] = _DepthIndex(game, key[1])
    return _INDEXES[key]


def _raw(board: Board) -> tuple[int, ...]:
    return board.cells if isinstance(board, LightsBoard) else board.chips


def _wrap(game: str, raw: tuple[int, ...], n: int) -> Board:
    return LightsBoard(raw, n) if game == LIGHTSOUT else TileBoard(raw)


def solution_depth(board: Board, max_depth: int = 12) -> int:
    """Minimal number of moves to the goal, by breadth-first search from the goal.

    Raises UnreachableBoard if the goal is not within ``max_depth`` moves (or not
    reachable at all, e.g. LightsOut boards outside the image of the push map).
    """
    n = board_size(board)
    idx = _index(board.game, n)
    raw = _raw(board)
    while raw not in idx.depth:
        if len(idx.layers) > max_depth or not idx.grow():
            raise UnreachableBoard(f"board {serialize(board)} not solvable within {max_depth} moves")
    d = idx.depth[raw]
    if d > max_depth:
        raise UnreachableBoard(f"board {serialize(board)} needs {d} > {max_depth} moves")
    return d


def boards_at_depth(game: str, depth: int, n: int = 5) -> list[Board]:
    """Every board whose solution depth is exactly ``depth``, in sorted order."""
    _check_game(game)
    if depth < 0:
        raise ValueError("depth must be non-negative")
    idx = _index(game, n)
    idx.ensure(depth)
    if depth >= len(idx.layers):
        return []
    return [_wrap(game, raw, n) for raw in sorted(idx.layers[depth])]


def count_boards(game: str, depth: int, n: int = 5) -> int:
    if not 1 <= depth <= 5:
        raise ValueError("depth must be within 1..5")
    idx = _index(game, n)
    idx.ensure(depth)
    return len(idx.layers[depth]) if depth < len(idx.layers) else 0


@lru_cache(maxsize=None)
def tileswap_sequence_boards(depth: int) -> tuple[TileBoard, ...]:
    """TileSwap boards of a given depth, built from all swap sequences of that length.

    A sequence is dropped as soon as one of its swaps reproduces a chip
    arrangement already seen earlier in the same sequence; survivors are kept
    only if breadth-first search confirms the requested depth.
    """
    if not 1 <= depth <= 5:
        raise ValueError("depth must be within 1..5")
    moves = enumerate_moves(TILESWAP)
    start = tuple(range(NUM_TILES))
    found: set[tuple[int, ...]] = set()

    def extend(chips: tuple[int, ...], seen: frozenset, remaining: int) -> None:
        if remaining == 0:
            found.add(chips)
            return
        for a, b in moves:
            nxt = list(chips)
            nxt[a], nxt[b] = nxt[b], nxt[a]
            t = tuple(nxt)
            if t in seen:
                continue
            extend(t, seen | {t}, remaining - 1)

    extend(start, frozenset({start}), depth)
    out = [TileBoard(raw) for raw in sorted(found)]
    return tuple(b for b in out if solution_depth(b) == depth)


def generate_board(
    game: str,
    depth: int,
    rng: np.random.Generator,
    split: str | None = None,
    n: int = 5,
    max_tries: int = 10_000,
) -> Board:
    """Random board of exactly the given solution depth, optionally from one split."""
    _check_game(game)
    if not 1 <= depth <= 5:
        raise ValueError("depth must be within 1..5")
    if split is not None and split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    if game == TILESWAP:
        pool = [b for b in tileswap_sequence_boards(depth) if split is None or split_of(b) == split]
        if not pool:
            raise BoardGenerationError(f"no TileSwap board at depth {depth} in split {split!r}")
        return pool[int(rng.integers(len(pool)))]

    if depth > n * n:
        raise BoardGenerationError(f"cannot push {depth} distinct fields on a {n}x{n} board")
    moves = enumerate_moves(LIGHTSOUT, n)
    for _ in range(max_tries):
        board = LightsBoard.off(n)
        for i in rng.choice(len(moves), size=depth, replace=False):
            board = lights_push(board, moves[int(i)])
        if split is not None and split_of(board) != split:
            continue
        # distinct pushes always give depth S on 5x5; small boards need the check
        if n != 5 and solution_depth(board) != depth:
            continue
        return board
    raise BoardGenerationError(f"no LightsOut board at depth {depth} in split {split!r} after {max_tries} tries")


def split_counts(game: str, depth: int, n: int = 5) -> dict[str, int]:
    counts = dict.fromkeys(SPLITS, 0)
    for b in boards_at_depth(game, depth, n):
        counts[split_of(b)] += 1
    return counts


def export_lines(game: str, depths: Iterable[int], n: int = 5) -> Iterator[str]:
    """Board-set records ``<game>,<depth>,<split>,<serialized-board>``."""
    for depth in depths:
        for b in boards_at_depth(game, depth, n):
            yield f"{game},{depth},{split_of(b)},{serialize(b)}"


def parse_line(line: str, n: int = 5) -> tuple[str, int, str, Board]:
    game, depth, split, *values = line.strip().split(",")
    raw = tuple(int(v) for v in values)
    if game == LIGHTSOUT:
        n = int(round(len(raw) ** 0.5))
    return game, int(depth), split, _wrap(game, raw, n)


def boards_from_moves(game: str, moves: Sequence[GameMove], n: int = 5) -> Board:
    board = goal_board(game, n)
    for m in moves:
        board = apply_move(board, m)
    return board


def all_sequences(game: str, length: int, n: int = 5) -> Iterator[tuple[GameMove, ...]]:
    return itertools.product(enumerate_moves(game, n), repeat=length)
