#!/usr/bin/env python3
"""
Base Agent Class for celltune
Abstract foundation for the learning agents (tabular Q-learning, DQN) and the
comparison baselines (FPA, max-SINR, random clear, FIFO clear).
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from config.run_config import AgentConfig
from environments.base_environment import BaseEnvironment, Observation


class AgentKind(Enum):
    Q_LEARNING = "q_learning"
    DQN = "dqn"
    FPA = "fpa"
    MAX_SINR = "maxsinr"
    RANDOM_CLEAR = "random"
    FIFO_CLEAR = "fifo"


@dataclass
class AgentMetrics:
    decisions: int = 0
    explorations: int = 0
    updates: int = 0
    episodes: int = 0
    total_reward: float = 0.0
    total_loss: float = 0.0

    @property
    def avg_reward_per_episode(self) -> float:
        return self.total_reward / max(1, self.episodes)

    @property
    def avg_loss(self) -> float:
        return self.total_loss / max(1, self.updates)

    @property
    def exploration_rate(self) -> float:
        return self.explorations / max(1, self.decisions)


class BaseAgent(ABC):
    """
    Abstract base class for all celltune agents.
    An agent instance is single-owner mutable state; one per environment.
    """

    learns = False

    def __init__(self, kind: AgentKind, config: AgentConfig, rng: np.random.Generator,
                 state_count: int = 3, action_count: int = 5):
        self.kind = kind
        self.config = config
        self.rng = rng
        self.state_count = state_count
        self.action_count = action_count
        self.training = True
        self.metrics = AgentMetrics()
        self.logger = logging.getLogger(f"{self.__class__.__name__}({kind.value})")

    @property
    def epsilon(self) -> float:
        return float("nan")

    def prepare(self, env: BaseEnvironment, episode_seed: int) -> None:
        """Hook run right after env.reset(); baselines set powers here."""

    @abstractmethod
    def act(self, observation: Observation) -> int:
        pass

    def observe(self, observation: Observation, action: int, reward: float,
                next_observation: Observation, terminal: bool, truncated: bool = False) -> Optional[float]:
        """`truncated` marks an episode cut off at the horizon; learners still bootstrap from it."""
        self.metrics.total_reward += reward
        return None

    def end_episode(self) -> None:
        self.metrics.episodes += 1

    def greedy(self) -> "BaseAgent":
        """Switch to evaluation mode: no learning, exploration at `eval_epsilon`."""
        self.training = False
        return self

    def model_bytes(self) -> int:
        """Memory held by the learned model (Q-table or network weights)."""
        return 0

    def save(self, path: Union[str, Path], seed: int = 0) -> Optional[Path]:
        return None

    def load(self, path: Union[str, Path]) -> None:
        raise ValueError(f"{self.kind.value} agent has no checkpoint to load")

    def summary(self) -> Dict[str, Any]:
        return {
            "agent": self.kind.value,
            "episodes": self.metrics.episodes,
            "decisions": self.metrics.decisions,
            "updates": self.metrics.updates,
            "avg_reward_per_episode": self.metrics.avg_reward_per_episode,
            "avg_loss": self.metrics.avg_loss,
            "exploration_rate": self.metrics.exploration_rate,
            "model_bytes": self.model_bytes(),
        }
