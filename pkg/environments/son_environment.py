#!/usr/bin/env python3
"""
SON fault-management environment (outdoor hexagonal cluster)
A centralized agent clears alarms in the fault register of the serving sector
while background faults keep arriving.
"""
from typing import Dict, Optional

import numpy as np

from config.run_config import RunConfig
from environments.base_environment import BaseEnvironment, EnvState, Observation, Transition
from network.events import (
    AZIMUTH_FAULT,
    FEEDER_FAULT,
    NEIGHBOR_DOWN_FAULT,
    TRANSMIT_DIVERSITY_FAULT,
    EventContext,
    EventRates,
    FaultLedger,
    FaultRegister,
    NetworkEvent,
    clearing_event_for,
    fault_ids,
    lookup_event,
    neighbor_down_effective_sinr_db,
    realize_event,
    sample_event,
)
from network.radio_model import (
    PropagationEnv,
    azimuth_gain_db,
    cluster_sinr_linear,
    dbm_to_mw,
    effective_sinr_db_from_linear,
    ici_bound_mw,
    linear_to_db,
    noise_power_mw,
    path_loss_db,
    received_power_dbm,
)
from network.topology import outdoor_hex, place_users_hex_sector

# corrective action id -> fault class it clears
ACTION_TO_FAULT: Dict[int, int] = {
    1: NEIGHBOR_DOWN_FAULT,
    2: TRANSMIT_DIVERSITY_FAULT,
    3: FEEDER_FAULT[PropagationEnv.OUTDOOR],
    4: AZIMUTH_FAULT,
}
FAULT_TO_ACTION: Dict[int, int] = {fault: action for action, fault in ACTION_TO_FAULT.items()}


def rayleigh_channels(rng: np.random.Generator, n_ues: int, n_rx: int, n_tx: int) -> np.ndarray:
    """(n_ues, n_rx, n_tx) i.i.d. CN(0, 1) draws."""
    real = rng.standard_normal((n_ues, n_rx, n_tx))
    imag = rng.standard_normal((n_ues, n_rx, n_tx))
    return (real + 1j * imag) / np.sqrt(2.0)


class SonEnvironment(BaseEnvironment):
    env_kind = PropagationEnv.OUTDOOR

    def __init__(self, config: RunConfig, seed: Optional[int] = None):
        super().__init__(config, seed)
        self.rates = EventRates.from_config(config.events, self.env_kind)
        self.ledger = FaultLedger()
        self.register = FaultRegister.empty(self.env_kind)
        self.observe_register = config.agent.observe_fault_register

    def _reset_episode(self) -> None:
        radio, topo, antenna = self.config.radio, self.config.topology, self.config.antenna
        ues = place_users_hex_sector(topo.ues_per_bs, topo.cell_size_m, antenna.boresight_deg, self.streams.placement)
        self.topology = outdoor_hex(topo.cell_size_m, topo.sectors_per_site, ues)
        self.noise_mw = noise_power_mw(radio)
        self.ici_bound = ici_bound_mw(self.topology.n_cells, radio)

        n_links = 1 + len(self.topology.interferers)
        shadowing = self.streams.shadowing.normal(0.0, radio.shadowing_std_db, size=(self.topology.n_ues, n_links))
        distances = np.column_stack([self.topology.serving_distances_m(), self.topology.interferer_distances_m()])
        angles = np.column_stack([self.topology.serving_angles_deg(), self.topology.interferer_angles_deg()])
        path_loss = np.vectorize(lambda d: path_loss_db(self.env_kind, d, radio))(distances) + shadowing
        pattern = np.vectorize(lambda a: azimuth_gain_db(antenna, float(a)))(angles)

        prb_power_dbm = radio.max_bs_power_dbm - 10.0 * np.log10(radio.n_prb)
        rx_mw = dbm_to_mw(received_power_dbm(prb_power_dbm, path_loss, radio) + pattern)
        self.serving_mw, self.interferer_mw = rx_mw[:, 0], rx_mw[:, 1:]
        self.physical_linear = cluster_sinr_linear(self.serving_mw, self.interferer_mw, self.noise_mw, self.ici_bound)
        self.physical_gamma_db = effective_sinr_db_from_linear(self.physical_linear)

        self.register = FaultRegister.empty(self.env_kind)
        self.ledger.reset()
        if self.config.env.seed_initial_fault:
            fault = int(self.streams.events.choice(fault_ids(self.env_kind)))
            self.register, _ = self._realize(lookup_event(self.env_kind, fault))
        self.logger.debug(f"Reset: {self.topology.n_ues} UEs, initial faults {self.register.active_faults()}")

    def _realize(self, event: NetworkEvent):
        context = EventContext(events=self.config.events, antenna=self.config.antenna,
                               rng=self.streams.events, ledger=self.ledger)
        if event.is_fault and event.event_id == NEIGHBOR_DOWN_FAULT and not self.register.is_active(NEIGHBOR_DOWN_FAULT):
            site = int(self.streams.events.integers(1, len(self.topology.neighbor_positions) + 1))
            indices = [k for k, tx in enumerate(self.topology.interferers) if tx.site_index == site]
            context.gamma_lagged_db = self.physical_gamma_db
            context.neighbor_down_gamma_db = neighbor_down_effective_sinr_db(
                self.serving_mw, self.interferer_mw, self.noise_mw, self.topology.n_cells,
                self.config.radio, indices, self.ici_bound)
        return realize_event(self.register, event, context)

    def ue_sinr_db(self) -> np.ndarray:
        return linear_to_db(self.physical_linear) + self.ledger.total_db()

    @property
    def observable(self) -> float:
        return float(self.register.popcount)

    @property
    def observation_size(self) -> int:
        return self.state_count + (len(self.register.bits) if self.observe_register else 0)

    def observation(self) -> Observation:
        base = super().observation()
        vector = base.vector
        if self.observe_register:
            vector = np.concatenate([vector, self.register.as_array()])
        return Observation(state=base.state, vector=vector, tti=base.tti, register=self.register)

    def _step(self, action: int) -> Transition:
        env, radio = self.config.env, self.config.radio
        previous = self.register.popcount
        delta = 0.0

        if action in ACTION_TO_FAULT:
            fault = ACTION_TO_FAULT[action]
            if self.register.is_active(fault):
                self.register, cleared = self._realize(clearing_event_for(self.env_kind, fault))
                delta += cleared
            else:
                self.logger.debug(f"TTI {self.tti}: action {action} targets inactive fault {fault}")

        event = sample_event(self.rates, self.register, self.streams.events)
        self.register, background = self._realize(event)
        delta += background

        current = self.register.popcount
        if current == 0:
            reward = env.r_max
        elif current < previous:
            reward = 1.0
        else:
            reward = -1.0

        if current < previous:
            next_state = int(EnvState.DECREASED)
        elif action == 0 and current == previous:
            next_state = int(EnvState.NO_ACTION)
        else:
            next_state = int(EnvState.INCREASED)

        self.samples.sinr_db.append(self.ue_sinr_db())
        self.samples.channels.append(
            rayleigh_channels(self.streams.channel, self.topology.n_ues, radio.n_rx_antennas, radio.n_tx_antennas))
        return Transition(
            tti=self.tti, state=self.state, action=action, next_state=next_state, reward=reward,
            terminal=current == 0 or self.tti >= self.horizon, event_id=event.event_id,
            delta_db=delta, observable=float(current), truncated=current != 0 and self.tti >= self.horizon,
        )
