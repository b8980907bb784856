#!/usr/bin/env python3
"""
VoLTE downlink power-control environment (indoor cluster)
The serving base station issues one closed-loop power command per TTI, either
to every SPS voice allocation of the cell or to the UEs whose round-robin slot
comes up, while network events shift the cluster SINR.
"""
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.run_config import PowerControlScope, RunConfig
from environments.base_environment import BaseEnvironment, EnvState, Transition
from network.events import (
    NEIGHBOR_DOWN_FAULT,
    EventContext,
    EventRates,
    FaultLedger,
    FaultRegister,
    NetworkEvent,
    neighbor_down_effective_sinr_db,
    realize_event,
    sample_event,
)
from network.radio_model import (
    PropagationEnv,
    cluster_sinr_linear,
    dbm_to_mw,
    effective_sinr_db_from_linear,
    ici_bound_mw,
    linear_to_db,
    noise_power_mw,
    path_loss_db,
    received_power_dbm,
)
from network.topology import indoor_square, place_users_indoor

# action id -> (kappa, PC)
POWER_ACTIONS: Dict[int, Tuple[int, int]] = {
    0: (0, 0),
    1: (3, -1),
    2: (1, -1),
    3: (1, +1),
    4: (3, +1),
}

_TOLERANCE = 1e-12


def next_power_state(action: int) -> int:
    _, pc = POWER_ACTIONS[action]
    if pc > 0:
        return int(EnvState.INCREASED)
    if pc < 0:
        return int(EnvState.DECREASED)
    return int(EnvState.NO_ACTION)


class VolteEnvironment(BaseEnvironment):
    env_kind = PropagationEnv.INDOOR

    def __init__(self, config: RunConfig, seed: Optional[int] = None):
        super().__init__(config, seed)
        self.rates = EventRates.from_config(config.events, self.env_kind)
        self.period = config.env.scheduler_period
        self.scope = config.env.power_control_scope
        self.stall_window = config.env.stall_window
        self.ledger = FaultLedger()
        self.register = FaultRegister.empty(self.env_kind)
        self.power_commands = 0
        self.command_history: List[int] = []

    # episode setup

    def _reset_episode(self) -> None:
        radio, topo = self.config.radio, self.config.topology
        ues = place_users_indoor(topo.ppp_intensity, topo.cell_size_m, topo.max_ues_per_bs, self.streams.placement)
        self.topology = indoor_square(topo.cell_size_m, ues)
        self.noise_mw = noise_power_mw(radio)
        self.ici_bound = ici_bound_mw(self.topology.n_cells, radio)

        serving_pl = np.array([path_loss_db(self.env_kind, d, radio) for d in self.topology.serving_distances_m()])
        self.serving_gain_db = received_power_dbm(0.0, serving_pl, radio)
        interferer_pl = np.vectorize(lambda d: path_loss_db(self.env_kind, d, radio))(
            self.topology.interferer_distances_m())
        self.interferer_mw = dbm_to_mw(received_power_dbm(radio.initial_tx_power_dbm, interferer_pl, radio))

        self.tx_power_dbm = np.full(self.topology.n_ues, radio.initial_tx_power_dbm, dtype=float)
        self.cursor = 0
        self.power_commands = 0
        self.command_history: List[int] = []
        self.register = FaultRegister.empty(self.env_kind)
        self.ledger.reset()

        self.offset_db = 0.0
        self.offset_db = self.config.env.gamma_initial_db - self._physical_gamma_db(self.tx_power_dbm)
        self.power_history: List[np.ndarray] = [self.tx_power_dbm.copy()]
        self.physical_history: List[float] = [self._physical_gamma_db(self.tx_power_dbm)]
        self.gamma_history: List[float] = [self.physical_history[0] + self.ledger.total_db()]
        self.logger.debug(f"Reset: {self.topology.n_ues} UEs, calibration offset {self.offset_db:.3f} dB")

    def set_tx_powers(self, powers_dbm) -> None:
        """Override the per-UE powers before the first step (baseline power settings)."""
        if self.tti != 0:
            raise ValueError("transmit powers can only be set before the first step")
        powers = np.asarray(powers_dbm, dtype=float)
        if powers.shape != self.tx_power_dbm.shape:
            raise ValueError(f"expected {self.tx_power_dbm.shape[0]} powers, got {powers.shape}")
        if not self.config.env.power_unbounded and np.any(powers > self.config.radio.max_bs_power_dbm + _TOLERANCE):
            raise ValueError(f"powers exceed P_max = {self.config.radio.max_bs_power_dbm} dBm")
        self.tx_power_dbm = powers.copy()
        self.power_history[0] = powers.copy()
        self.physical_history[0] = self._physical_gamma_db(powers)
        self.gamma_history[0] = self.physical_history[0] + self.ledger.total_db()

    # radio

    def _serving_mw(self, powers_dbm: np.ndarray) -> np.ndarray:
        return dbm_to_mw(powers_dbm + self.serving_gain_db)

    def _physical_linear(self, powers_dbm: np.ndarray) -> np.ndarray:
        return cluster_sinr_linear(self._serving_mw(powers_dbm), self.interferer_mw, self.noise_mw, self.ici_bound)

    def _physical_gamma_db(self, powers_dbm: np.ndarray) -> float:
        return effective_sinr_db_from_linear(self._physical_linear(powers_dbm)) + self.offset_db

    def ue_sinr_db(self) -> np.ndarray:
        return linear_to_db(self._physical_linear(self.tx_power_dbm)) + self.offset_db + self.ledger.total_db()

    @property
    def observable(self) -> float:
        return self.gamma_history[-1]

    @property
    def gamma_eff_db(self) -> float:
        return self.gamma_history[-1]

    # dynamics

    def _event_context(self, event: NetworkEvent, lag: int) -> EventContext:
        context = EventContext(events=self.config.events, antenna=self.config.antenna,
                               rng=self.streams.events, ledger=self.ledger)
        if event.is_fault and event.event_id == NEIGHBOR_DOWN_FAULT and not self.register.is_active(NEIGHBOR_DOWN_FAULT):
            neighbor = int(self.streams.events.integers(self.interferer_mw.shape[1]))
            removed = neighbor_down_effective_sinr_db(
                self._serving_mw(self.power_history[lag]), self.interferer_mw, self.noise_mw,
                self.topology.n_cells, self.config.radio, [neighbor], self.ici_bound)
            context.gamma_lagged_db = self.physical_history[lag]
            context.neighbor_down_gamma_db = removed + self.offset_db
        return context

    def scheduled_ues(self, t: int) -> np.ndarray:
        """UEs commanded at TTI t: all of them, or the round-robin slot (t - 1) mod N."""
        n_ues = self.topology.n_ues
        if self.scope is PowerControlScope.CELL:
            return np.arange(n_ues)
        slot = (t - 1) % self.period
        return np.flatnonzero(np.arange(n_ues) % self.period == slot)

    def command_lag(self, t: int) -> int:
        """TTI whose power a command builds on: the previous TTI, or one scheduler period back."""
        span = 1 if self.scope is PowerControlScope.CELL else self.period
        return max(t - span, 0)

    def _apply_command(self, t: int, kappa: int, pc: int) -> bool:
        env, radio = self.config.env, self.config.radio
        if pc == 0:
            return False
        ues = self.scheduled_ues(t)
        if ues.size == 0:
            return False
        requested = self.power_history[self.command_lag(t)][ues] + kappa * pc
        clamped = False
        if not env.power_unbounded and np.any(requested > radio.max_bs_power_dbm):
            requested = np.minimum(requested, radio.max_bs_power_dbm)
            clamped = True
        self.tx_power_dbm[ues] = requested
        self.power_commands += 1
        return clamped

    def _step(self, action: int) -> Transition:
        env, radio = self.config.env, self.config.radio
        t = self.tti
        lag = max(t - self.period, 0)

        kappa, pc = POWER_ACTIONS[action]
        self.cursor = (t - 1) % self.period
        clamped = self._apply_command(t, kappa, pc)
        self.command_history.append(kappa * pc)
        if not env.power_unbounded and np.any(self.tx_power_dbm > radio.max_bs_power_dbm + _TOLERANCE):
            raise RuntimeError(f"transmit power above P_max at TTI {t}")

        event = sample_event(self.rates, self.register, self.streams.events)
        self.register, delta = realize_event(self.register, event, self._event_context(event, lag))

        self.power_history.append(self.tx_power_dbm.copy())
        self.physical_history.append(self._physical_gamma_db(self.tx_power_dbm))
        gamma = self.physical_history[-1] + self.ledger.total_db()
        self.gamma_history.append(gamma)
        self.samples.sinr_db.append(self.ue_sinr_db())

        reward, target_met = self._reward(gamma, lag, clamped)
        horizon_reached = t >= self.horizon
        return Transition(
            tti=t, state=self.state, action=action, next_state=next_power_state(action),
            reward=reward, terminal=target_met or horizon_reached, event_id=event.event_id, delta_db=delta,
            observable=gamma, truncated=horizon_reached and not target_met,
        )

    def stalled(self) -> bool:
        """No rise of gamma over the last `stall_window` TTIs while still in the first half of the episode."""
        t, k = self.tti, self.stall_window
        if t < k or t >= self.horizon / 2.0:
            return False
        return self.gamma_history[t] <= self.gamma_history[t - k] + _TOLERANCE

    def _reward(self, gamma: float, lag: int, clamped: bool) -> Tuple[float, bool]:
        env = self.config.env
        if gamma >= env.gamma_target_db - _TOLERANCE:
            return env.r_max, True
        if clamped or self.stalled():
            return env.r_min, False
        progress = gamma - self.gamma_history[lag]
        if abs(progress) <= _TOLERANCE:
            return 0.0, False
        return float(math.copysign(1.0, progress)), False
