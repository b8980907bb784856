#!/usr/bin/env python3
"""
Comparison baselines
FPA and max-SINR for VoLTE power control; random and FIFO alarm clearing for
SON fault management.
"""
import math
from collections import deque
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np

from agents.base_agent import AgentKind, BaseAgent
from config.run_config import AgentConfig, RadioConfig
from environments.base_environment import BaseEnvironment, Observation
from environments.son_environment import ACTION_TO_FAULT, FAULT_TO_ACTION
from network.events import FaultRegister

NO_OP = 0


def fpa_tx_power_dbm(config: RadioConfig, n_prb_ue: int) -> float:
    """Total power split equally over the PRBs: P_max - 10 log10(N_PRB) + 10 log10(N_PRB_i)."""
    if not 1 <= n_prb_ue <= config.n_prb:
        raise ValueError(f"UE PRB allocation must lie in [1, {config.n_prb}], got {n_prb_ue}")
    return config.max_bs_power_dbm - 10.0 * math.log10(config.n_prb) + 10.0 * math.log10(n_prb_ue)


def max_sinr_power(foreseen_sinr_db: Sequence[float], initial_tx_power_dbm: float,
                   target_db: float) -> Tuple[float, float, int]:
    """
    Oracle power for one UE from its foreseen SINR trajectory at constant power:
    t* = argmax_t (target - gamma[t]), xi = max(0, target - gamma[t*]), P* = P0 + xi.
    Returns (P*, xi, t*).
    """
    trace = np.asarray(foreseen_sinr_db, dtype=float)
    if trace.size == 0:
        raise ValueError("max-SINR power needs a non-empty SINR trace")
    shortfall = target_db - trace
    t_star = int(np.argmax(shortfall))
    xi = max(0.0, float(shortfall[t_star]))
    return float(initial_tx_power_dbm) + xi, xi, t_star


def random_clear(register: FaultRegister, rng: np.random.Generator) -> int:
    """Corrective action for a uniformly chosen active alarm; no-op on an empty register."""
    active = register.active_faults()
    if not active:
        return NO_OP
    return FAULT_TO_ACTION[active[int(rng.integers(len(active)))]]


def fifo_clear(register: FaultRegister, queue: Deque[int]) -> int:
    """Pop the oldest still-active fault and return its corrective action (no-op when none)."""
    queued = set(queue)
    missing = [f for f in register.active_faults() if f not in queued]
    if missing:
        raise ValueError(f"active faults {missing} are missing from the arrival queue")
    while queue:
        fault = queue.popleft()
        if register.is_active(fault):
            return FAULT_TO_ACTION[fault]
    return NO_OP


class FpaAgent(BaseAgent):
    """Fixed power allocation: constant power, never a power command."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator, radio: RadioConfig, n_prb_ue: int = 1):
        super().__init__(AgentKind.FPA, config, rng)
        self.power_dbm = fpa_tx_power_dbm(radio, n_prb_ue)

    def prepare(self, env: BaseEnvironment, episode_seed: int) -> None:
        env.set_tx_powers(np.full(env.topology.n_ues, self.power_dbm))

    def act(self, observation: Observation) -> int:
        self.metrics.decisions += 1
        return NO_OP


class MaxSinrAgent(BaseAgent):
    """
    Infeasible oracle: replays the episode at constant power with the same seed,
    then lifts each UE by its worst foreseen shortfall below the target before
    the first TTI.
    """

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(AgentKind.MAX_SINR, config, rng)
        self.last_xi_db: Optional[np.ndarray] = None

    def prepare(self, env: BaseEnvironment, episode_seed: int) -> None:
        replay = type(env)(env.config)
        replay.reset(seed=episode_seed)
        history: List[np.ndarray] = [replay.ue_sinr_db()]
        terminal = False
        while not terminal:
            _, _, terminal = replay.step(NO_OP)
            history.append(replay.samples.sinr_db[-1])
        foreseen = np.vstack(history)
        target = env.config.env.gamma_target_db

        powers, xis = [], []
        for ue, p0 in enumerate(env.tx_power_dbm):
            p_star, xi, _ = max_sinr_power(foreseen[:, ue], p0, target)
            powers.append(p_star)
            xis.append(xi)
        self.last_xi_db = np.array(xis)
        env.set_tx_powers(np.array(powers))
        self.logger.debug(f"Episode seed {episode_seed}: mean xi {self.last_xi_db.mean():.2f} dB")

    def act(self, observation: Observation) -> int:
        self.metrics.decisions += 1
        return NO_OP


class RandomClearAgent(BaseAgent):
    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(AgentKind.RANDOM_CLEAR, config, rng)

    def act(self, observation: Observation) -> int:
        if observation.register is None:
            raise ValueError("random clearing needs the fault register in the observation")
        self.metrics.decisions += 1
        return random_clear(observation.register, self.rng)


class FifoClearAgent(BaseAgent):
    """Clears alarms in arrival order; arrivals are read off register changes."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(AgentKind.FIFO_CLEAR, config, rng)
        self.queue: Deque[int] = deque()
        self._seen: Optional[FaultRegister] = None

    def prepare(self, env: BaseEnvironment, episode_seed: int) -> None:
        self.queue.clear()
        for fault in env.ledger.arrival_order():
            self.queue.append(fault)
        self._seen = env.register

    def _enqueue_arrivals(self, register: FaultRegister) -> None:
        previous = set(self._seen.active_faults()) if self._seen is not None else set()
        for fault in register.active_faults():
            if fault not in previous and fault not in self.queue:
                self.queue.append(fault)

    def act(self, observation: Observation) -> int:
        register = observation.register
        if register is None:
            raise ValueError("FIFO clearing needs the fault register in the observation")
        self._enqueue_arrivals(register)
        skipped = [f for f in self.queue if not register.is_active(f)]
        if skipped:
            self.logger.warning(f"Skipping faults cleared before their turn: {skipped}")
        action = fifo_clear(register, self.queue)
        # the targeted fault counts as new again if it re-fires later
        self._seen = register if action == NO_OP else register.with_bit(ACTION_TO_FAULT[action], 0)
        self.metrics.decisions += 1
        return action
