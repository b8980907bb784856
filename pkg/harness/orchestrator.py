#!/usr/bin/env python3
"""
Experiment Orchestration for celltune
Runs training and evaluation episodes, writes traces, checkpoints and metrics,
and fans sweeps out over (algorithm, q, seed) cells in parallel workers.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from agents.base_agent import BaseAgent
from agents.baseline_agents import FifoClearAgent, FpaAgent, MaxSinrAgent, RandomClearAgent
from agents.dqn_agent import DqnAgent
from agents.q_learning_agent import QLearningAgent
from config.run_config import Algorithm, EnvironmentKind, RunConfig
from config.settings import settings
from environments.base_environment import BaseEnvironment, Transition
from environments.son_environment import SonEnvironment
from environments.volte_environment import VolteEnvironment
from infrastructure.artifact_store import csv_bytes, trace_digest, write_artifact
from infrastructure.rng_streams import RngStreams
from metrics.performance import (
    DEFAULT_MOS_TABLE,
    MetricsReport,
    format_retainability_table,
    format_son_table,
    load_mos_table,
    mean_report,
    son_report,
    volte_report,
)

TRACE_HEADER = ["run_id", "episode", "tti", "state", "action", "next_state", "event_id",
                "delta_db", "observable", "reward", "terminal", "epsilon"]
METRIC_FIELDS = [name for name in MetricsReport.__dataclass_fields__ if name != "samples"]
COMMAND_HEADER = ["algorithm", "episode", "tti", "action", "command_db"]
COST_HEADER = ["run_id", "algorithm", "episodes", "decisions", "updates", "train_time_s", "model_bytes"]


@dataclass
class EpisodeRecord:
    episode: int
    seed: int
    transitions: List[Transition]
    sinr_db: np.ndarray
    channels: List[np.ndarray]
    gamma_series: List[Tuple[int, float]]
    power_commands: int = 0
    target_met: bool = False
    command_series: List[Tuple[int, int, int]] = field(default_factory=list)


@dataclass
class RunResult:
    run_id: str
    trace_path: Path
    trace_digest: str
    metrics: Optional[MetricsReport]
    metrics_path: Optional[Path]
    checkpoint_path: Optional[Path]
    wall_clock_s: float
    plot_path: Optional[Path] = None
    commands_path: Optional[Path] = None
    train_time_s: Optional[float] = None
    model_bytes: Optional[int] = None
    episodes: List[EpisodeRecord] = field(default_factory=list, repr=False)


def build_environment(config: RunConfig) -> BaseEnvironment:
    if config.environment is EnvironmentKind.VOLTE:
        return VolteEnvironment(config)
    return SonEnvironment(config)


def build_agent(config: RunConfig, env: BaseEnvironment, rng: np.random.Generator) -> BaseAgent:
    algorithm = config.algorithm
    if algorithm is Algorithm.PROPOSED:
        if config.environment is EnvironmentKind.VOLTE:
            return QLearningAgent(config.agent, rng, env.state_count, env.action_count)
        return DqnAgent(config.agent, rng, env.observation_size, env.action_count)
    if algorithm is Algorithm.FPA:
        return FpaAgent(config.agent, rng, config.radio)
    if algorithm is Algorithm.MAX_SINR:
        return MaxSinrAgent(config.agent, rng)
    if algorithm is Algorithm.RANDOM:
        return RandomClearAgent(config.agent, rng)
    return FifoClearAgent(config.agent, rng)


def effective_config(config: RunConfig) -> RunConfig:
    """Max-SINR runs lift the power ceiling."""
    if config.algorithm is Algorithm.MAX_SINR and not config.env.power_unbounded:
        return config.with_updates(**{"env.power_unbounded": True})
    return config


class ExperimentOrchestrator:
    """
    Owns one (config, seed) run: one environment, one agent, and the artifacts
    they produce under <output_dir>/<run_id>.
    """

    def __init__(self, config: RunConfig, output_dir: Union[str, Path, None] = None, emit_plot_data: bool = False):
        self.config = effective_config(config)
        root = Path(output_dir or config.output_dir or settings.OUTPUT_DIR)
        self.run_dir = root / self.run_id
        self.emit_plot_data = emit_plot_data
        self.streams = RngStreams(self.config.seed)
        self.mos_table = (load_mos_table(self.config.metrics.mos_table_path, self.config.metrics.bitrate_kbps)
                          if self.config.metrics.mos_table_path else DEFAULT_MOS_TABLE)
        self.logger = logging.getLogger(f"{self.__class__.__name__}")

    @property
    def q(self) -> int:
        topo = self.config.topology
        return topo.max_ues_per_bs if self.config.environment is EnvironmentKind.VOLTE else topo.ues_per_bs

    @property
    def run_id(self) -> str:
        c = self.config
        return f"{c.environment.value}-{c.algorithm.value}-q{self.q}-s{c.seed}"

    # episodes

    def run_episode(self, env: BaseEnvironment, agent: BaseAgent, episode: int, seed: int) -> EpisodeRecord:
        env.reset(seed=seed)
        agent.prepare(env, seed)
        observation = env.observation()
        epsilons: List[float] = []
        terminal = False
        while not terminal:
            epsilons.append(agent.epsilon)
            action = agent.act(observation)
            _, reward, terminal = env.step(action)
            next_observation = env.observation()
            agent.observe(observation, action, reward, next_observation, terminal, env.truncated)
            observation = next_observation
        agent.end_episode()

        transitions = [t.with_epsilon(e) for t, e in zip(env.transitions, epsilons)]
        sinr = env.samples.matrix()
        if isinstance(env, VolteEnvironment):
            series = list(enumerate(env.gamma_history))
            met = env.gamma_history[-1] >= self.config.env.gamma_target_db - 1e-12
            commands = env.power_commands
            command_series = [(t.tti, t.action, c) for t, c in zip(env.transitions, env.command_history)]
        else:
            series = [(t + 1, float(10.0 * np.log10(np.mean(10.0 ** (row / 10.0))))) for t, row in enumerate(sinr)]
            met = env.register.popcount == 0
            commands = 0
            command_series = []
        return EpisodeRecord(episode, seed, transitions, sinr, list(env.samples.channels), series, commands, met,
                             command_series)

    def _run_episodes(self, env: BaseEnvironment, agent: BaseAgent, count: int, purpose: str) -> List[EpisodeRecord]:
        records = []
        for episode in range(count):
            record = self.run_episode(env, agent, episode, self.streams.episode_seed(episode, purpose))
            records.append(record)
            self.logger.debug(f"{purpose} episode {episode}: {len(record.transitions)} TTIs, "
                              f"return {sum(t.reward for t in record.transitions):.1f}")
        return records

    # phases

    def train(self) -> RunResult:
        """Run the configured training episodes and persist the trace and the learned model."""
        start = time.time()
        env = build_environment(self.config)
        agent = build_agent(self.config, env, self.streams.agent)
        self.logger.info(f"🚀 Training {self.run_id} for {self.config.episodes} episodes")
        records = self._run_episodes(env, agent, self.config.episodes, "training")
        train_time = time.time() - start
        summary = agent.summary()
        self.logger.debug(f"📊 Agent summary: {summary}")

        checkpoint = None
        if agent.learns:
            checkpoint = agent.save(self.run_dir / "model.ckpt", seed=self.config.seed)
        result = self._write_phase("train", records, checkpoint, start)
        result.train_time_s = train_time
        result.model_bytes = agent.model_bytes()
        self._write_cost(summary, train_time, result.model_bytes)
        self.logger.info(f"✅ Training {self.run_id} finished in {result.wall_clock_s:.1f}s")
        return result

    def evaluate(self, checkpoint: Union[str, Path, None] = None) -> RunResult:
        """Greedy evaluation over the evaluation episode seeds; never writes to the checkpoint."""
        start = time.time()
        env = build_environment(self.config)
        agent = build_agent(self.config, env, self.streams.evaluation)
        if agent.learns:
            if checkpoint is None:
                raise ValueError(f"{self.config.algorithm.value} evaluation needs a checkpoint")
            agent.load(checkpoint)
        agent.greedy()
        self.logger.info(f"🔍 Evaluating {self.run_id} over {self.config.eval_episodes} episodes")
        records = self._run_episodes(env, agent, self.config.eval_episodes, "evaluation")
        result = self._write_phase("eval", records, Path(checkpoint) if checkpoint else None, start)
        if result.metrics is not None:
            self.logger.info(f"✅ {self.run_id}: retainability {result.metrics.retainability:.4f}")
        return result

    # artifacts

    def report(self, records: Sequence[EpisodeRecord]) -> Optional[MetricsReport]:
        blocks = [r.sinr_db for r in records if r.sinr_db.size]
        if not blocks:
            return None
        gamma_min = self.config.env.gamma_min_db
        if self.config.environment is EnvironmentKind.VOLTE:
            return volte_report(blocks, self.config.metrics, gamma_min, self.mos_table)
        channels = [np.stack(r.channels) for r in records if r.sinr_db.size]
        return son_report(blocks, channels, self.config.radio, self.config.metrics, gamma_min)

    def _write_phase(self, phase: str, records: List[EpisodeRecord], checkpoint: Optional[Path],
                     start: float) -> RunResult:
        rows = (
            [self.run_id, r.episode, t.tti, t.state, t.action, t.next_state, t.event_id,
             t.delta_db, t.observable, t.reward, t.terminal, t.epsilon]
            for r in records for t in r.transitions
        )
        trace = csv_bytes(TRACE_HEADER, rows)
        trace_path = write_artifact(self.run_dir / f"{phase}_trace.csv", trace, self.run_id)

        metrics = self.report(records)
        metrics_path = None
        if metrics is not None:
            c = self.config
            row = [self.run_id, c.environment.value, c.algorithm.value, self.q, c.seed] + \
                  [getattr(metrics, name) for name in METRIC_FIELDS] + [metrics.samples]
            header = ["run_id", "environment", "algorithm", "q", "seed"] + METRIC_FIELDS + ["samples"]
            metrics_path = write_artifact(self.run_dir / f"{phase}_metrics.csv", csv_bytes(header, [row]), self.run_id)

        plot_path = None
        if self.emit_plot_data:
            plot_rows = ([self.config.algorithm.value, r.episode, tti, gamma]
                         for r in records for tti, gamma in r.gamma_series)
            plot_name = "plot_gamma.csv" if phase == "eval" else f"{phase}_plot_gamma.csv"
            plot_path = write_artifact(self.run_dir / plot_name,
                                       csv_bytes(["algorithm", "episode", "tti", "gamma_eff_db"], plot_rows),
                                       self.run_id)

        commands_path = None
        if self.emit_plot_data and self.config.environment is EnvironmentKind.VOLTE:
            command_rows = ([self.config.algorithm.value, r.episode, tti, action, step_db]
                            for r in records for tti, action, step_db in r.command_series)
            commands_name = "plot_commands.csv" if phase == "eval" else f"{phase}_plot_commands.csv"
            commands_path = write_artifact(self.run_dir / commands_name,
                                           csv_bytes(COMMAND_HEADER, command_rows), self.run_id)

        return RunResult(
            run_id=self.run_id, trace_path=trace_path, trace_digest=trace_digest(trace), metrics=metrics,
            metrics_path=metrics_path, checkpoint_path=checkpoint, wall_clock_s=time.time() - start,
            plot_path=plot_path, commands_path=commands_path, episodes=records,
        )

    def _write_cost(self, summary: Dict[str, Any], train_time_s: float, model_bytes: int) -> Path:
        """Training cost of the run: wall time spent in episodes and the bytes the learned model occupies."""
        row = [self.run_id, self.config.algorithm.value, summary["episodes"], summary["decisions"],
               summary["updates"], train_time_s, model_bytes]
        return write_artifact(self.run_dir / "train_cost.csv", csv_bytes(COST_HEADER, [row]), self.run_id)


def train(config: RunConfig, output_dir=None, emit_plot_data: bool = False) -> RunResult:
    return ExperimentOrchestrator(config, output_dir, emit_plot_data).train()


def evaluate(config: RunConfig, checkpoint=None, output_dir=None, emit_plot_data: bool = False) -> RunResult:
    return ExperimentOrchestrator(config, output_dir, emit_plot_data).evaluate(checkpoint)


# sweeps

@dataclass(frozen=True)
class SweepCell:
    algorithm: Algorithm
    q: int
    seed: int


@dataclass
class SweepResult:
    csv_path: Path
    table_path: Path
    reports: Dict[Tuple[str, int], MetricsReport]
    failures: List[Tuple[SweepCell, str]]


def cell_config(base: RunConfig, cell: SweepCell) -> RunConfig:
    key = "topology.max_ues_per_bs" if base.environment is EnvironmentKind.VOLTE else "topology.ues_per_bs"
    return base.with_updates(**{"algorithm": cell.algorithm.value, "seed": cell.seed, key: cell.q})


def run_cell(base: RunConfig, cell: SweepCell, output_dir: Path, emit_plot_data: bool = False) -> MetricsReport:
    orchestrator = ExperimentOrchestrator(cell_config(base, cell), output_dir, emit_plot_data)
    checkpoint = None
    if cell.algorithm is Algorithm.PROPOSED:
        checkpoint = orchestrator.train().checkpoint_path
    result = orchestrator.evaluate(checkpoint)
    if result.metrics is None:
        raise ValueError(f"cell {cell} produced no evaluation samples")
    return result.metrics


async def run_sweep(base: RunConfig, algorithms: Sequence[Algorithm], qs: Sequence[int], seeds: Sequence[int],
                    output_dir: Union[str, Path, None] = None, workers: Optional[int] = None,
                    emit_plot_data: bool = False) -> SweepResult:
    logger = logging.getLogger("SweepOrchestrator")
    root = Path(output_dir or base.output_dir or settings.OUTPUT_DIR)
    cells = [SweepCell(Algorithm(a), int(q), int(s)) for a in algorithms for q in qs for s in seeds]
    semaphore = asyncio.Semaphore(workers or settings.SWEEP_WORKERS)
    logger.info(f"🚀 Sweep over {len(cells)} cells with {workers or settings.SWEEP_WORKERS} workers")

    async def run_one(cell: SweepCell) -> MetricsReport:
        async with semaphore:
            report = await asyncio.to_thread(run_cell, base, cell, root, emit_plot_data)
            logger.info(f"✅ Cell {cell.algorithm.value} q={cell.q} seed={cell.seed} done")
            return report

    outcomes = await asyncio.gather(*(run_one(c) for c in cells), return_exceptions=True)

    grouped: Dict[Tuple[str, int], List[MetricsReport]] = {}
    failures: List[Tuple[SweepCell, str]] = []
    for cell, outcome in zip(cells, outcomes):
        if isinstance(outcome, BaseException):
            logger.error(f"❌ Cell {cell.algorithm.value} q={cell.q} seed={cell.seed} failed: {outcome}")
            failures.append((cell, str(outcome)))
            continue
        grouped.setdefault((cell.algorithm.value, cell.q), []).append(outcome)
    reports = {key: mean_report(group) for key, group in grouped.items()}

    rows = []
    for (algorithm, q), report in sorted(reports.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        for name in METRIC_FIELDS:
            value = getattr(report, name)
            if value is not None:
                rows.append([algorithm, q, name, value])
    sweep_name = f"{base.environment.value}-sweep"
    csv_path = write_artifact(root / f"{sweep_name}.csv", csv_bytes(["algorithm", "q", "metric", "value"], rows),
                              sweep_name)
    if base.environment is EnvironmentKind.VOLTE:
        table = format_retainability_table({f"{a} q={q}": r for (a, q), r in reports.items()})
    else:
        table = format_son_table(reports)
    table_path = write_artifact(root / f"{sweep_name}_table.md", (table + "\n").encode("utf-8"), sweep_name)
    return SweepResult(csv_path=csv_path, table_path=table_path, reports=reports, failures=failures)


def sweep(base: RunConfig, algorithms: Sequence[Algorithm], qs: Sequence[int], seeds: Sequence[int],
          output_dir=None, workers: Optional[int] = None, emit_plot_data: bool = False) -> SweepResult:
    return asyncio.run(run_sweep(base, algorithms, qs, seeds, output_dir, workers, emit_plot_data))
