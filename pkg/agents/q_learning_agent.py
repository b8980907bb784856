#!/usr/bin/env python3
"""
Tabular Q-learning agent (VoLTE closed-loop power control)
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from agents.base_agent import AgentKind, BaseAgent
from agents.policy import EpsilonSchedule, select_action_verbose
from config.run_config import AgentConfig
from environments.base_environment import Observation
from infrastructure.artifact_store import load_checkpoint, qtable_csv_bytes, save_checkpoint, write_artifact


@dataclass
class QTable:
    state_count: int
    action_count: int
    learning_rate: float = 0.2
    discount: float = 0.995
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError(f"learning rate must lie in (0, 1), got {self.learning_rate}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if self.values is None:
            self.values = np.zeros((self.state_count, self.action_count))
        elif self.values.shape != (self.state_count, self.action_count):
            raise ValueError(f"Q values of shape {self.values.shape}, expected {(self.state_count, self.action_count)}")

    def update(self, s: int, a: int, r: float, s_next: int, terminal: bool = False) -> float:
        """Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a'))"""
        bootstrap = 0.0 if terminal else self.discount * float(np.max(self.values[s_next]))
        self.values[s, a] = (1.0 - self.learning_rate) * self.values[s, a] + self.learning_rate * (r + bootstrap)
        return self.values[s, a]


def tabular_update(table: QTable, s: int, a: int, r: float, s_next: int, terminal: bool = False) -> QTable:
    table.update(s, a, r, s_next, terminal)
    return table


class QLearningAgent(BaseAgent):
    learns = True

    def __init__(self, config: AgentConfig, rng: np.random.Generator, state_count: int = 3, action_count: int = 5):
        super().__init__(AgentKind.Q_LEARNING, config, rng, state_count, action_count)
        self.table = QTable(state_count, action_count, config.learning_rate, config.discount)
        self.schedule = EpsilonSchedule.from_config(config)

    @property
    def epsilon(self) -> float:
        return self.schedule.epsilon

    def greedy(self) -> "QLearningAgent":
        self.schedule.pin(self.config.eval_epsilon)
        return super().greedy()

    def end_episode(self) -> None:
        super().end_episode()
        if self.training:
            self.schedule.step()

    def act(self, observation: Observation) -> int:
        action, explored = select_action_verbose(self.table.values[observation.state], self.schedule, self.rng)
        self.metrics.decisions += 1
        self.metrics.explorations += int(explored)
        return action

    def observe(self, observation: Observation, action: int, reward: float,
                next_observation: Observation, terminal: bool, truncated: bool = False) -> Optional[float]:
        super().observe(observation, action, reward, next_observation, terminal, truncated)
        if not self.training:
            return None
        self.table.update(observation.state, action, reward, next_observation.state, terminal and not truncated)
        self.metrics.updates += 1
        return None

    def model_bytes(self) -> int:
        return int(self.table.values.nbytes)

    def save(self, path: Union[str, Path], seed: int = 0) -> Path:
        path = Path(path)
        hyperparameters = {"learning_rate": self.table.learning_rate, "discount": self.table.discount,
                           "epsilon": self.schedule.epsilon}
        written = save_checkpoint(path, "qtable", {"q": self.table.values}, seed, hyperparameters)
        write_artifact(path.with_suffix(".csv"), qtable_csv_bytes(self.table.values))
        return written

    def load(self, path: Union[str, Path]) -> None:
        checkpoint = load_checkpoint(path, expected_kind="qtable")
        values = checkpoint.arrays.get("q")
        if values is None or values.shape != self.table.values.shape:
            raise ValueError(f"checkpoint Q-table shape does not match ({self.state_count}, {self.action_count})")
        self.table.values = values.copy()
        self.logger.info(f"Loaded Q-table from {path}")
