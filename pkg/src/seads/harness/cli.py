"""Command-line entry point: ``seads <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .. import boardgames as bg
from ..skillmodel import ForwardModel
from ..training import METRIC_FIELDS, Trainer
from . import baseline as flat
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    check_game,
    load_checkpoint,
    pack_networks,
    restore_trainer,
    save_checkpoint,
    trainer_checkpoint,
    unpack_networks,
)
from .config import ConfigError, RunConfig, config_from_dict, dump_config, load_config
from .evaluation import SUMMARY_FIELDS, TASK_FIELDS, EvalReport, count_states, count_unique_moves, eval_success, sample_tasks

log = logging.getLogger("seads")

CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.csv"


class CsvLog:
    """CSV file with a fixed header, flushed after every row."""

    def __init__(self, path: Path, fields: Sequence[str], rows: Iterable[dict] = ()):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", newline="")
        self.writer = csv.DictWriter(self.fh, fieldnames=list(fields), lineterminator="\n")
        self.writer.writeheader()
        for row in rows:
            self.writer.writerow(row)
        self.fh.flush()

    def write(self, row: dict) -> None:
        self.writer.writerow(row)
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    CsvLog(path, fields, rows).close()


# --- SEADS training -------------------------------------------------------------


def run_train(cfg: RunConfig, out: Path, resume: Optional[Checkpoint] = None, max_epochs: Optional[int] = None) -> Trainer:
    """Train (or resume) a SEADS agent, writing metrics, config echo and checkpoints to ``out``.

    ``max_epochs`` stops early after that many total epochs, leaving a resumable checkpoint.
    """
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(cfg.train_config())
    if resume is not None:
        restore_trainer(trainer, resume)
    (out / "config.yaml").write_text(dump_config(cfg))
    metrics = CsvLog(out / METRICS_NAME, METRIC_FIELDS, trainer.history)
    ckpt_path = out / CHECKPOINT_NAME
    config = cfg.to_dict()
    try:
        while trainer.env_steps < trainer.cfg.total_env_steps:
            if max_epochs is not None and trainer.epoch >= max_epochs:
                break
            row = trainer.train_epoch()
            metrics.write(row)
            if trainer.epoch % 50 == 0:
                log.info("epoch %d steps %d reward %.3f model loss %.3f", trainer.epoch, trainer.env_steps,
                         row["mean_reward"], row["model_loss"])
            if cfg.checkpoint_every and trainer.epoch % cfg.checkpoint_every == 0:
                save_checkpoint(ckpt_path, trainer_checkpoint(trainer, config))
    finally:
        metrics.close()
    save_checkpoint(ckpt_path, trainer_checkpoint(trainer, config))
    return trainer


def load_run(path) -> tuple[RunConfig, Trainer]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "seads":
        raise CheckpointError(f"{path}: expected a SEADS checkpoint, found {ckpt.kind!r}")
    cfg = config_from_dict(ckpt.config)
    return cfg, restore_trainer(Trainer(cfg.train_config()), ckpt)


# --- baseline -------------------------------------------------------------------


def baseline_config(cfg: RunConfig) -> flat.BaselineConfig:
    b = cfg.baseline
    return flat.BaselineConfig(
        env=cfg.env_config(),
        total_env_steps=b.total_env_steps,
        batch_size=b.batch_size,
        buffer_size=b.buffer_size,
        samples_per_epoch=b.samples_per_epoch,
        updates_per_epoch=b.updates_per_epoch,
        # the task step limit is a truncation, so the flat agent keeps bootstrapping
        sac=cfg.sac_config(hidden=b.hidden, alpha=b.alpha, bootstrap_timeouts=True),
        max_board_depth=cfg.train.max_board_depth,
        seed=cfg.seed,
    )


def run_baseline(cfg: RunConfig, out: Path) -> flat.FlatSacTrainer:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    trainer = flat.FlatSacTrainer(baseline_config(cfg))
    metrics = CsvLog(out / "baseline_metrics.csv", flat.BASELINE_FIELDS)
    evals = CsvLog(out / "baseline_eval.csv", ("env_steps",) + SUMMARY_FIELDS)
    tasks = sample_tasks(cfg.game, cfg.board_size, cfg.eval.tasks_per_depth, cfg.eval.seed)

    def evaluate():
        report = flat.eval_flat(trainer.env, trainer.agent, tasks, cfg.eval.seed)
        for r in report.summary_rows():
            evals.write({"env_steps": trainer.env_steps, **r})
        return report

    try:
        next_eval = cfg.baseline.eval_every
        while trainer.env_steps < trainer.cfg.total_env_steps:
            row = trainer.train_epoch()
            if row is not None:
                metrics.write(row)
                log.info("steps %d success rate %.3f", trainer.env_steps, row["success_rate"])
            if next_eval and trainer.env_steps >= next_eval:
                evaluate()
                next_eval += cfg.baseline.eval_every
        report = evaluate()
    finally:
        metrics.close()
        evals.close()
    arrays: dict = {}
    pack_networks("agent/", trainer.agent.networks, arrays)
    state = {"env_steps": trainer.env_steps, "epoch": trainer.epoch}
    save_checkpoint(out / "baseline.ckpt", Checkpoint("baseline", cfg.to_dict(), state, arrays))
    print(f"flat SAC success rate {report.success_rate():.3f} over {len(report.results)} tasks")
    return trainer


def load_baseline(path) -> tuple[RunConfig, flat.FlatSacTrainer]:
    ckpt = load_checkpoint(path)
    cfg = config_from_dict(ckpt.config)
    trainer = flat.FlatSacTrainer(baseline_config(cfg))
    unpack_networks("agent/", trainer.agent.networks, ckpt.arrays)
    return cfg, trainer


# --- evaluation commands ----------------------------------------------------------


def _check_against_config(ckpt_path, config_path: Optional[str], profile: Optional[str]) -> None:
    if config_path is None:
        return
    cfg = load_config(config_path, profile, seed=0)
    check_game(load_checkpoint(ckpt_path), cfg.game, cfg.board_size)


def run_count_skills(ckpt_path, out: Optional[Path], n_states: Optional[int] = None, seed: Optional[int] = None) -> float:
    cfg, trainer = load_run(ckpt_path)
    n = n_states or cfg.eval.count_states
    seed = cfg.eval.seed if seed is None else seed
    states = count_states(trainer.env, n, seed)
    counts = count_unique_moves(trainer.env, trainer.policy(deterministic=True), cfg.K, states, np.random.default_rng([seed, 13]))
    if out is not None:
        write_csv(out / "count_skills.csv", ("state", "board", "unique_moves"),
                  ({"state": i, "board": bg.serialize(s.board), "unique_moves": int(c)} for i, (s, c) in enumerate(zip(states, counts))))
    mean = float(np.mean(counts))
    print(f"mean unique moves {mean:.2f} of {len(trainer.env.moves)} over {n} states (K={cfg.K})")
    return mean


def run_eval_success(ckpt_path, replan: bool, out: Optional[Path], seed: Optional[int] = None) -> EvalReport:
    ckpt = load_checkpoint(ckpt_path)
    seed_cfg = config_from_dict(ckpt.config)
    seed = seed_cfg.eval.seed if seed is None else seed
    tasks = sample_tasks(seed_cfg.game, seed_cfg.board_size, seed_cfg.eval.tasks_per_depth, seed)
    if ckpt.kind == "baseline":
        cfg, tr = load_baseline(ckpt_path)
        report = flat.eval_flat(tr.env, tr.agent, tasks, seed)
    else:
        cfg, trainer = load_run(ckpt_path)
        if not isinstance(trainer.model, ForwardModel):
            raise CheckpointError("planning needs a forward model; this run trained a skill discriminator")
        e = cfg.eval
        report = eval_success(trainer.env, trainer.policy(deterministic=True), trainer.model, tasks, replan, seed,
                              e.wall_time_limit, e.max_plan_depth, e.replan_budget)
    if out is not None:
        tag = "replan" if replan else "noreplan"
        write_csv(out / f"eval_tasks_{tag}.csv", TASK_FIELDS, (r.row() for r in report.results))
        write_csv(out / f"eval_summary_{tag}.csv", SUMMARY_FIELDS, report.summary_rows())
    for r in report.summary_rows():
        print(f"depth {r['depth']}: {r['successes']}/{r['tasks']} solved")
    wt = report.wall_time_stats()
    print(f"success rate {report.success_rate():.3f} (replan={'on' if replan else 'off'}); "
          f"planning time mean {wt['mean']:.3f}s max {wt['max']:.3f}s")
    return report


def run_gen_boards(game: str, depths: Sequence[int], out: Path, n: int) -> int:
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = list(bg.export_lines(game, depths, n))
    out.write_text("".join(line + "\n" for line in lines))
    print(f"wrote {len(lines)} boards to {out}")
    return len(lines)


# --- argument parsing ------------------------------------------------------------


def _depths(text: str) -> list[int]:
    try:
        depths = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated depths, got {text!r}")
    if not depths or any(not 1 <= d <= 5 for d in depths):
        raise argparse.ArgumentTypeError("depths must lie in 1..5")
    return depths


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seads", description="Symbolic skill discovery on board-game environments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def run_options(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="YAML run configuration")
        sp.add_argument("--profile", choices=("paper", "fast"), help="preset applied beneath the config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="output directory (overrides config and SEADS_OUTPUT_DIR)")

    sp = sub.add_parser("train", help="train SEADS skills and forward model")
    run_options(sp)
    sp.add_argument("--checkpoint", help="resume from this checkpoint (its config is used)")

    sp = sub.add_parser("baseline-sac", help="train the flat SAC baseline")
    run_options(sp)

    sp = sub.add_parser("count-skills", help="mean number of distinct moves triggered by the skills")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--config", help="reject the checkpoint unless it matches this config's game")
    sp.add_argument("--profile", choices=("paper", "fast"))
    sp.add_argument("--seed", type=int, help="evaluation seed (default: config eval.seed)")
    sp.add_argument("--out", help="directory for the per-state CSV")
    sp.add_argument("--states", type=int, help="number of start states (default 100)")

    sp = sub.add_parser("eval-success", help="planned task success on held-out boards")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--replan", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--seed", type=int, help="evaluation seed (default: config eval.seed)")
    sp.add_argument("--out", help="directory for result CSVs")

    sp = sub.add_parser("gen-boards", help="export the board sets with split labels")
    sp.add_argument("--game", choices=bg.GAMES, required=True)
    sp.add_argument("--depths", type=_depths, default=[1, 2, 3, 4, 5])
    sp.add_argument("--board-size", type=int, default=None)
    sp.add_argument("--out", required=True, help="output file")
    return p


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config, args.profile, args.seed)
    if args.out:
        cfg.output_dir = args.out
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "train":
            if args.checkpoint:
                ckpt = load_checkpoint(args.checkpoint)
                cfg = config_from_dict(ckpt.config)
                if args.out:
                    cfg.output_dir = args.out
                run_train(cfg, Path(cfg.output_dir), resume=ckpt)
            else:
                cfg = _run_config(args)
                run_train(cfg, Path(cfg.output_dir))
        elif args.command == "baseline-sac":
            cfg = _run_config(args)
            run_baseline(cfg, Path(cfg.output_dir))
        elif args.command == "count-skills":
            _check_against_config(args.checkpoint, args.config, args.profile)
            run_count_skills(args.checkpoint, Path(args.out) if args.out else None, args.states, args.seed)
        elif args.command == "eval-success":
            run_eval_success(args.checkpoint, args.replan, Path(args.out) if args.out else None, args.seed)
        elif args.command == "gen-boards":
            n = args.board_size or (bg.TILE_SIDE if args.game == bg.TILESWAP else 5)
            run_gen_boards(args.game, args.depths, Path(args.out), n)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
