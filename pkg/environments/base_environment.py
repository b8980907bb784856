#!/usr/bin/env python3
"""
Base environment for celltune
Shared contract of the VoLTE power-control and SON fault-management MDPs:
reset() -> state, step(action) -> (next_state, reward, terminal).
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from config.run_config import RunConfig
from infrastructure.rng_streams import RngStreams
from network.events import FaultRegister


class EnvState(int, Enum):
    NO_ACTION = 0
    INCREASED = 1
    DECREASED = 2


@dataclass(frozen=True)
class Observation:
    state: int
    vector: np.ndarray
    tti: int
    register: Optional[FaultRegister] = None


@dataclass(frozen=True)
class Transition:
    tti: int
    state: int
    action: int
    next_state: int
    reward: float
    terminal: bool
    event_id: int
    delta_db: float
    observable: float
    truncated: bool = False
    epsilon: float = float("nan")

    def with_epsilon(self, epsilon: float) -> "Transition":
        return replace(self, epsilon=float(epsilon))


@dataclass
class EpisodeSamples:
    """Per-UE SINR (dB) after every step, plus the MIMO draws when the env makes them."""
    sinr_db: List[np.ndarray] = field(default_factory=list)
    channels: List[np.ndarray] = field(default_factory=list)

    def matrix(self) -> np.ndarray:
        return np.vstack(self.sinr_db) if self.sinr_db else np.zeros((0, 0))


class BaseEnvironment(ABC):
    """
    Single-owner mutable episode state. Many instances may run side by side,
    each on its own RngStreams.
    """

    state_count = 3
    action_count = 5

    def __init__(self, config: RunConfig, seed: Optional[int] = None):
        self.config = config
        self.streams = RngStreams(config.seed if seed is None else seed)
        self.logger = logging.getLogger(self.__class__.__name__)
        self.horizon = config.env.episode_tti
        self.tti = 0
        self.state = int(EnvState.NO_ACTION)
        self.terminal = False
        self.truncated = False
        self.samples = EpisodeSamples()
        self.transitions: List[Transition] = []

    def reset(self, seed: Optional[int] = None) -> int:
        if seed is not None:
            self.streams = RngStreams(seed)
        self.tti = 0
        self.state = int(EnvState.NO_ACTION)
        self.terminal = False
        self.truncated = False
        self.samples = EpisodeSamples()
        self.transitions = []
        self._reset_episode()
        return self.state

    def step(self, action: int) -> Tuple[int, float, bool]:
        if not 0 <= int(action) < self.action_count:
            raise ValueError(f"invalid action id {action}; expected 0..{self.action_count - 1}")
        if self.terminal:
            raise ValueError("episode is over; call reset() first")
        self.tti += 1
        transition = self._step(int(action))
        self.state = transition.next_state
        self.terminal = transition.terminal
        self.truncated = transition.truncated
        self.transitions.append(transition)
        return transition.next_state, transition.reward, transition.terminal

    def observation(self) -> Observation:
        one_hot = np.zeros(self.state_count)
        one_hot[self.state] = 1.0
        return Observation(state=self.state, vector=one_hot, tti=self.tti)

    @property
    def observation_size(self) -> int:
        return self.state_count

    @property
    @abstractmethod
    def observable(self) -> float:
        """gamma_eff (dB) or fault popcount."""

    @abstractmethod
    def _reset_episode(self) -> None:
        pass

    @abstractmethod
    def _step(self, action: int) -> Transition:
        pass
