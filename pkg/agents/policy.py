"""
Epsilon-greedy action selection with multiplicative decay.
The schedule decays once per finished training episode, not per decision.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config.run_config import AgentConfig

logger = logging.getLogger(__name__)


@dataclass
class EpsilonSchedule:
    epsilon: float = 1.0
    decay: float = 0.99
    floor: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.floor <= self.epsilon <= 1.0:
            raise ValueError(f"need 0 <= floor <= epsilon <= 1, got floor={self.floor}, epsilon={self.epsilon}")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")

    @classmethod
    def from_config(cls, config: AgentConfig) -> "EpsilonSchedule":
        return cls(epsilon=config.epsilon, decay=config.epsilon_decay, floor=config.epsilon_min)

    def step(self) -> float:
        self.epsilon = max(self.epsilon * self.decay, self.floor)
        return self.epsilon

    def pin(self, epsilon: float) -> None:
        """Fix exploration for evaluation; may go below the training floor."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.epsilon = epsilon


def greedy_action(q_row) -> int:
    """Argmax with ties going to the lowest action id."""
    row = np.asarray(q_row, dtype=float)
    if row.size == 0:
        raise ValueError("cannot select an action from an empty Q row")
    return int(np.argmax(row))


def select_action_verbose(q_row, schedule: EpsilonSchedule, rng: np.random.Generator) -> Tuple[int, bool]:
    row = np.asarray(q_row, dtype=float)
    if row.size == 0:
        raise ValueError("cannot select an action from an empty Q row")
    explored = rng.random() < schedule.epsilon
    action = int(rng.integers(row.size)) if explored else greedy_action(row)
    return action, explored


def select_action(q_row, schedule: EpsilonSchedule, rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else argmax. Leaves the schedule untouched."""
    return select_action_verbose(q_row, schedule, rng)[0]
