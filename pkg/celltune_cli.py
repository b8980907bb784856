#!/usr/bin/env python3
"""
celltune CLI Tool
Train, evaluate and sweep the VoLTE power-control and SON fault-management agents.
Commands:
- volte-pc train|evaluate|sweep: closed-loop downlink power control (indoor cluster).
- son-fm train|evaluate|sweep: alarm clearing in the outdoor hexagonal cluster.
Exit codes: 0 on success, 1 on configuration or I/O errors, 2 on usage errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config.run_config import Algorithm, ConfigError, EnvironmentKind, RunConfig, load_run_config
from config.settings import settings
from harness.orchestrator import ExperimentOrchestrator, sweep
from infrastructure.artifact_store import CheckpointError

logger = logging.getLogger(__name__)

COMMANDS = {"volte-pc": EnvironmentKind.VOLTE, "son-fm": EnvironmentKind.SON}
SWEEP_ALGORITHMS = {
    EnvironmentKind.VOLTE: [Algorithm.PROPOSED, Algorithm.FPA, Algorithm.MAX_SINR],
    EnvironmentKind.SON: [Algorithm.PROPOSED, Algorithm.RANDOM, Algorithm.FIFO],
}


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _algorithm_list(text: str) -> List[Algorithm]:
    try:
        return [Algorithm(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError:
        choices = ", ".join(a.value for a in Algorithm)
        raise argparse.ArgumentTypeError(f"unknown algorithm in '{text}' (choose from {choices})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="celltune", description="celltune CLI Tool")
    envs = parser.add_subparsers(dest="environment", required=True)
    for name, kind in COMMANDS.items():
        env_parser = envs.add_parser(name, help=f"{kind.value} experiments")
        actions = env_parser.add_subparsers(dest="action", required=True)

        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", type=Path, help="flat key=value run config")
        common.add_argument("--seed", type=int, help="master seed (overrides the config)")
        common.add_argument("--episodes", type=int, help="training episodes (overrides the config)")
        common.add_argument("--out", type=Path, help="output directory (default CELLTUNE_OUTPUT_DIR)")
        common.add_argument("--eval-episodes", type=int, help="evaluation episodes (overrides the config)")
        common.add_argument("--emit-plot-data", action="store_true", help="write the gamma_eff series per TTI")

        train = actions.add_parser("train", parents=[common], help="train and persist a model")
        train.add_argument("--algorithm", type=Algorithm, choices=list(Algorithm), metavar="NAME")

        evaluate = actions.add_parser("evaluate", parents=[common], help="greedy evaluation")
        evaluate.add_argument("--algorithm", type=Algorithm, choices=list(Algorithm), metavar="NAME")
        evaluate.add_argument("--checkpoint", type=Path, help="model checkpoint (proposed algorithm)")

        sweeper = actions.add_parser("sweep", parents=[common], help="train + evaluate over a grid")
        sweeper.add_argument("--algorithm", type=_algorithm_list, metavar="NAMES",
                             help="comma-separated algorithms (default: all for this environment)")
        sweeper.add_argument("--q", type=_int_list, default=[5, 10, 50], help="UEs per BS, comma-separated")
        sweeper.add_argument("--seeds", type=_int_list, help="comma-separated seeds (default: --seed)")
        sweeper.add_argument("--workers", type=int, help="parallel cells (default CELLTUNE_SWEEP_WORKERS)")
    return parser


def resolve_config(args: argparse.Namespace, kind: EnvironmentKind) -> RunConfig:
    config = load_run_config(args.config, kind) if args.config else RunConfig.for_environment(kind)
    if config.environment is not kind:
        raise ConfigError(f"config {args.config} is for '{config.environment.value}', not '{kind.value}'")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if getattr(args, "eval_episodes", None) is not None:
        overrides["eval_episodes"] = args.eval_episodes
    if isinstance(args.algorithm, Algorithm):
        overrides["algorithm"] = args.algorithm
    return config.with_updates(**overrides) if overrides else config


def run(args: argparse.Namespace) -> int:
    kind = COMMANDS[args.environment]
    config = resolve_config(args, kind)

    if args.action == "sweep":
        algorithms = args.algorithm or SWEEP_ALGORITHMS[kind]
        seeds = args.seeds or [config.seed]
        result = sweep(config, algorithms, args.q, seeds, args.out, args.workers, args.emit_plot_data)
        print(f"Sweep CSV: {result.csv_path}")
        print(Path(result.table_path).read_text(encoding="utf-8"))
        if result.failures:
            for cell, reason in result.failures:
                print(f"failed: {cell.algorithm.value} q={cell.q} seed={cell.seed}: {reason}", file=sys.stderr)
            return 1
        return 0

    orchestrator = ExperimentOrchestrator(config, args.out, args.emit_plot_data)
    if args.action == "train":
        result = orchestrator.train()
    else:
        checkpoint = args.checkpoint
        default_checkpoint = orchestrator.run_dir / "model.ckpt"
        if checkpoint is None and config.algorithm is Algorithm.PROPOSED and default_checkpoint.is_file():
            checkpoint = default_checkpoint
        result = orchestrator.evaluate(checkpoint)

    print(f"Run {result.run_id}: trace {result.trace_path} (sha256 {result.trace_digest[:12]})")
    if result.checkpoint_path:
        print(f"Checkpoint: {result.checkpoint_path}")
    if result.metrics is not None:
        for name, value in result.metrics.as_dict().items():
            if value is not None:
                print(f"  {name}: {value}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=settings.LOG_LEVEL, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    try:
        return run(args)
    except (ConfigError, ValidationError, CheckpointError) as e:
        print(f"celltune: configuration error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"celltune: I/O error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"celltune: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
