"""
Fixed-capacity experience replay with uniform sampling.
"""
from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray


class ReplayMemory:
    def __init__(self, capacity: int = 10_000, batch_size: int = 32):
        if capacity <= batch_size:
            raise ValueError(f"capacity ({capacity}) must exceed batch size ({batch_size})")
        self.capacity = capacity
        self.batch_size = batch_size
        self._buffer: List[Experience] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._buffer)

    @property
    def ready(self) -> bool:
        return len(self._buffer) >= self.batch_size

    def push(self, experience: Experience) -> None:
        if len(self._buffer) < self.capacity:
            self._buffer.append(experience)
        else:
            self._buffer[self._cursor] = experience
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, rng: np.random.Generator, batch_size: int = None) -> Batch:
        size = batch_size or self.batch_size
        if len(self._buffer) < size:
            raise ValueError(f"replay memory holds {len(self._buffer)} experiences, need {size}")
        indices = rng.choice(len(self._buffer), size=size, replace=False)
        picked = [self._buffer[i] for i in indices]
        return Batch(
            states=np.vstack([e.state for e in picked]),
            actions=np.array([e.action for e in picked], dtype=int),
            rewards=np.array([e.reward for e in picked], dtype=float),
            next_states=np.vstack([e.next_state for e in picked]),
            terminals=np.array([e.terminal for e in picked], dtype=bool),
            indices=indices,
        )
