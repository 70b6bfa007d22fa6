"""Run configuration: YAML schema, presets and validation.

Schema (all sections optional except ``seed``)::

    seed: 0                    # required
    profile: paper             # paper | fast (preset applied before the file's values)
    game: lightsout            # lightsout | tileswap
    manipulator: cursor
    board_size: 5
    skills: 25                 # K; defaults to the game's move count (x1.2, rounded up, with more_skills)
    output_dir: runs/default
    checkpoint_every: 100      # epochs; 0 disables periodic checkpoints
    env:   {max_displacement, step_limit, trigger_threshold, swap_half_diagonal}
    train: {total_env_steps, episodes_per_epoch, long_buffer, recent_buffer, sample_size,
            fm_relabel_fraction, sac_relabel_fraction, sac_updates, sac_batch,
            fm_updates, fm_batch, fm_lr, fm_hidden, max_board_depth}
    sac:   {lr, tau, gamma, alpha, hidden, bootstrap_timeouts}
    ablation: {no_relabel, no_sac_relabel, no_fm_relabel, no_second_best,
               no_novelty, vic_discriminator, more_skills}
    eval:  {seed, tasks_per_depth, count_states, wall_time_limit, max_plan_depth, replan_budget}
    baseline: {total_env_steps, batch_size, buffer_size, samples_per_epoch,
               updates_per_epoch, hidden, alpha, eval_every}

The ``SEADS_OUTPUT_DIR`` environment variable overrides ``output_dir``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from typing import Any, Optional, get_args, get_origin, get_type_hints

import yaml

from .. import boardgames as bg
from ..embedding import EnvConfig
from ..sac import SacConfig
from ..training import TrainConfig

OUTPUT_ENV_VAR = "SEADS_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class EnvSection:
    max_displacement: float = 0.2
    step_limit: int = 10
    trigger_threshold: float = 0.0
    swap_half_diagonal: float = 0.25


@dataclass
class TrainSection:
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
    fm_hidden: list = field(default_factory=lambda: [256, 256])
    max_board_depth: int = 5


@dataclass
class SacSection:
    lr: float = 3e-4
    tau: float = 0.005
    gamma: float = 0.99
    alpha: float = 0.1
    hidden: list = field(default_factory=lambda: [512, 512])
    # a skill that reaches its step limit has ended, so by default its critic does not bootstrap
    bootstrap_timeouts: bool = False


@dataclass
class AblationSection:
    no_relabel: bool = False
    no_sac_relabel: bool = False
    no_fm_relabel: bool = False
    no_second_best: bool = False
    no_novelty: bool = False
    vic_discriminator: bool = False
    more_skills: bool = False


@dataclass
class EvalSection:
    seed: int = 1000
    tasks_per_depth: int = 20
    count_states: int = 100
    wall_time_limit: float = 60.0
    max_plan_depth: int = 12
    replan_budget: int = 10


@dataclass
class BaselineSection:
    total_env_steps: int = 500_000
    batch_size: int = 256
    buffer_size: int = 1_000_000
    samples_per_epoch: int = 8
    updates_per_epoch: int = 1
    hidden: list = field(default_factory=lambda: [512, 512, 512])
    alpha: float = 0.1
    eval_every: int = 0


@dataclass
class RunConfig:
    seed: int
    profile: str = "paper"
    game: str = bg.LIGHTSOUT
    manipulator: str = "cursor"
    board_size: int = 5
    skills: Optional[int] = None
    output_dir: str = "runs/default"
    checkpoint_every: int = 100
    env: EnvSection = field(default_factory=EnvSection)
    train: TrainSection = field(default_factory=TrainSection)
    sac: SacSection = field(default_factory=SacSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    eval: EvalSection = field(default_factory=EvalSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)

    # --- derived --------------------------------------------------------------

    @property
    def K(self) -> int:
        if self.skills is not None:
            return self.skills
        moves = len(bg.enumerate_moves(self.game, self.board_size))
        # ceil(1.2 * moves): 25 -> 30 and 12 -> 15 for the over-provisioned variant
        return -(-6 * moves // 5) if self.ablation.more_skills else moves

    def env_config(self) -> EnvConfig:
        e = self.env
        return EnvConfig(self.game, self.board_size, e.max_displacement, e.step_limit,
                         e.trigger_threshold, e.swap_half_diagonal)

    def sac_config(self, hidden=None, alpha=None, bootstrap_timeouts=None) -> SacConfig:
        s = self.sac
        boot = s.bootstrap_timeouts if bootstrap_timeouts is None else bootstrap_timeouts
        return SacConfig(s.lr, s.tau, s.gamma, s.alpha if alpha is None else alpha,
                         tuple(s.hidden if hidden is None else hidden), boot)

    def train_config(self) -> TrainConfig:
        t, a = self.train, self.ablation
        no_fm = a.no_relabel or a.no_fm_relabel
        no_sac = a.no_relabel or a.no_sac_relabel
        return TrainConfig(
            env=self.env_config(),
            K=self.K,
            total_env_steps=t.total_env_steps,
            episodes_per_epoch=t.episodes_per_epoch,
            long_buffer=t.long_buffer,
            recent_buffer=t.recent_buffer,
            sample_size=t.sample_size,
            fm_relabel_fraction=0.0 if no_fm else t.fm_relabel_fraction,
            sac_relabel_fraction=0.0 if no_sac else t.sac_relabel_fraction,
            sac_updates=t.sac_updates,
            sac_batch=t.sac_batch,
            fm_updates=t.fm_updates,
            fm_batch=t.fm_batch,
            fm_lr=t.fm_lr,
            fm_hidden=tuple(t.fm_hidden),
            sac=self.sac_config(),
            second_best_norm=not a.no_second_best,
            novelty_bonus=not (a.no_novelty or a.vic_discriminator),
            discriminator=a.vic_discriminator,
            max_board_depth=t.max_board_depth,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PROFILES: dict[str, dict] = {
    "paper": {},
    # minutes-scale preset for property-level checks; not a published setting
    "fast": {
        "game": bg.LIGHTSOUT,
        "board_size": 3,
        "train": {"total_env_steps": 50_000},
        "sac": {"hidden": [256, 256]},
        "baseline": {"total_env_steps": 50_000, "hidden": [256, 256, 256]},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _coerce(tp, value, path: str):
    origin = get_origin(tp)
    if origin is not None and type(None) in get_args(tp):
        if value is None:
            return None
        tp = next(a for a in get_args(tp) if a is not type(None))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list) or not all(isinstance(v, int) and v > 0 for v in value):
            raise ConfigError(f"{path}: expected a list of positive integers, got {value!r}")
        return list(value)
    return value


def _build(cls, data: Any, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown field")
    kwargs = {}
    for f in fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{sub}: required field missing")
    return cls(**kwargs)


def _validate(cfg: RunConfig) -> None:
    if cfg.game not in bg.GAMES:
        raise ConfigError(f"game: expected one of {bg.GAMES}, got {cfg.game!r}")
    if cfg.manipulator != "cursor":
        raise ConfigError(f"manipulator: only 'cursor' is supported, got {cfg.manipulator!r}")
    if cfg.game == bg.TILESWAP and cfg.board_size != bg.TILE_SIDE:
        raise ConfigError("board_size: TileSwap is played on a 3x3 board")
    if not 2 <= cfg.board_size <= 5:
        raise ConfigError("board_size: supported sizes are 2..5")
    if cfg.skills is not None and cfg.skills < 2:
        raise ConfigError("skills: need at least 2 skills")
    a = cfg.ablation
    if a.more_skills and cfg.skills is not None:
        raise ConfigError("ablation.more_skills: conflicts with an explicit skills count")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc


def config_from_dict(data: dict, profile: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    data = dict(data or {})
    name = profile or data.get("profile", "paper")
    if name not in PROFILES:
        raise ConfigError(f"profile: unknown profile {name!r}; expected one of {sorted(PROFILES)}")
    merged = _merge(PROFILES[name], data)
    merged["profile"] = name
    if seed is not None:
        merged["seed"] = seed
    if "seed" not in merged or merged["seed"] is None:
        raise ConfigError("seed: required field missing")
    cfg = _build(RunConfig, merged)
    if os.environ.get(OUTPUT_ENV_VAR):
        cfg.output_dir = os.environ[OUTPUT_ENV_VAR]
    _validate(cfg)
    return cfg


def load_config(path: Optional[str] = None, profile: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("<root>: expected a mapping")
    return config_from_dict(data, profile, seed)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
