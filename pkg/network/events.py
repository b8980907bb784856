"""
Network events for celltune
Fault/clear catalogs for the indoor and outdoor clusters, the per-TTI event
sampler, the binary fault register and the ledger of realized SINR contributions.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.run_config import AntennaConfig, EventConfig, RadioConfig
from network.radio_model import (
    PropagationEnv,
    azimuth_delta_db,
    cluster_sinr_linear,
    effective_sinr_db_from_linear,
    neighbor_down_sinr_lower_bound,
    vswr_delta_loss_db,
)

logger = logging.getLogger(__name__)

NORMAL_EVENT_ID = 0


@dataclass(frozen=True)
class NetworkEvent:
    env_kind: PropagationEnv
    event_id: int
    description: str
    is_clearing: bool = False
    paired_fault_id: Optional[int] = None

    def __post_init__(self):
        if self.is_clearing and self.paired_fault_id is None:
            raise ValueError(f"clearing event {self.event_id} needs a paired fault")
        if not self.is_clearing and self.paired_fault_id is not None:
            raise ValueError(f"fault event {self.event_id} cannot reference a paired fault")

    @property
    def is_normal(self) -> bool:
        return self.event_id == NORMAL_EVENT_ID

    @property
    def is_fault(self) -> bool:
        return not self.is_normal and not self.is_clearing


def _catalog(env_kind: PropagationEnv, faults: List[str], clears: List[str]) -> Dict[int, NetworkEvent]:
    events = {NORMAL_EVENT_ID: NetworkEvent(env_kind, NORMAL_EVENT_ID, "Cluster is normal.")}
    for k, description in enumerate(faults, start=1):
        events[k] = NetworkEvent(env_kind, k, description)
    for k, description in enumerate(clears, start=1):
        event_id = len(faults) + k
        events[event_id] = NetworkEvent(env_kind, event_id, description, is_clearing=True, paired_fault_id=k)
    return events


INDOOR_CATALOG = _catalog(
    PropagationEnv.INDOOR,
    faults=[
        "Feeder fault alarm (3 dB loss of signal).",
        "Neighboring base station down.",
        "VSWR out of range alarm.",
    ],
    clears=[
        "Feeder fault alarm cleared.",
        "Neighboring base station up again.",
        "VSWR back in range.",
    ],
)

OUTDOOR_CATALOG = _catalog(
    PropagationEnv.OUTDOOR,
    faults=[
        "Changed antenna azimuth clockwise.",
        "Neighboring base station is down.",
        "Transmit diversity failed.",
        "Feeder fault alarm (6 dB loss of signal).",
    ],
    clears=[
        "Reset antenna azimuth.",
        "Neighboring base station is up again.",
        "Transmit diversity is normal.",
        "Feeder fault alarm cleared.",
    ],
)

# Fault classes by role, shared by both catalogs where they exist
FEEDER_FAULT = {PropagationEnv.INDOOR: 1, PropagationEnv.OUTDOOR: 4}
NEIGHBOR_DOWN_FAULT = 2
VSWR_FAULT = 3
AZIMUTH_FAULT = 1
TRANSMIT_DIVERSITY_FAULT = 3


def catalog(env_kind) -> Dict[int, NetworkEvent]:
    return INDOOR_CATALOG if PropagationEnv(env_kind) is PropagationEnv.INDOOR else OUTDOOR_CATALOG


def lookup_event(env_kind, event_id: int) -> NetworkEvent:
    events = catalog(env_kind)
    if event_id not in events:
        raise ValueError(f"unknown {PropagationEnv(env_kind).value} event id {event_id}")
    return events[event_id]


def fault_ids(env_kind) -> Tuple[int, ...]:
    return tuple(e.event_id for e in catalog(env_kind).values() if e.is_fault)


def clearing_event_for(env_kind, fault_id: int) -> NetworkEvent:
    for event in catalog(env_kind).values():
        if event.is_clearing and event.paired_fault_id == fault_id:
            return event
    raise ValueError(f"no clearing event for {PropagationEnv(env_kind).value} fault {fault_id}")


@dataclass(frozen=True)
class EventRates:
    """Per-TTI occurrence probabilities; every fault shares p_fault, every clear p_clear."""
    env_kind: PropagationEnv
    p_fault: float
    p_clear: float

    def __post_init__(self):
        for name in ("p_fault", "p_clear"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if self.p_normal < -1e-12:
            raise ValueError(f"event rates sum above 1 (p_normal = {self.p_normal})")

    @classmethod
    def from_config(cls, config: EventConfig, env_kind) -> "EventRates":
        return cls(env_kind=PropagationEnv(env_kind), p_fault=config.p_fault, p_clear=config.p_clear)

    def rate(self, event: NetworkEvent) -> float:
        if event.is_normal:
            return self.p_normal
        return self.p_clear if event.is_clearing else self.p_fault

    @property
    def p_normal(self) -> float:
        n_faults = len(fault_ids(self.env_kind))
        n_clears = len(catalog(self.env_kind)) - 1 - n_faults
        return 1.0 - n_faults * self.p_fault - n_clears * self.p_clear


@dataclass(frozen=True)
class FaultRegister:
    """Binary alarm vector; bit k-1 belongs to fault id k."""
    env_kind: PropagationEnv
    bits: Tuple[int, ...]

    def __post_init__(self):
        expected = len(fault_ids(self.env_kind))
        if len(self.bits) != expected:
            raise ValueError(f"register needs {expected} bits, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"register bits must be 0/1, got {self.bits}")

    @classmethod
    def empty(cls, env_kind) -> "FaultRegister":
        env_kind = PropagationEnv(env_kind)
        return cls(env_kind, (0,) * len(fault_ids(env_kind)))

    @classmethod
    def from_faults(cls, env_kind, active) -> "FaultRegister":
        register = cls.empty(env_kind)
        for fault_id in active:
            register = register.with_bit(fault_id, 1)
        return register

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    def is_active(self, fault_id: int) -> bool:
        return bool(self.bits[fault_id - 1])

    def active_faults(self) -> List[int]:
        return [k + 1 for k, b in enumerate(self.bits) if b]

    def with_bit(self, fault_id: int, value: int) -> "FaultRegister":
        if not 1 <= fault_id <= len(self.bits):
            raise ValueError(f"fault id {fault_id} outside register of {len(self.bits)} bits")
        bits = list(self.bits)
        bits[fault_id - 1] = value
        return FaultRegister(self.env_kind, tuple(bits))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=float)


def eligible_events(register: FaultRegister) -> List[NetworkEvent]:
    """Faults are always eligible; a clear only while its fault is active."""
    return [
        e for e in catalog(register.env_kind).values()
        if e.is_fault or (e.is_clearing and register.is_active(e.paired_fault_id))
    ]


def sample_event(rates: EventRates, register: FaultRegister, rng: np.random.Generator) -> NetworkEvent:
    """One uniform draw per call; mass of ineligible clears falls through to normal."""
    u = rng.random()
    acc = 0.0
    for event in eligible_events(register):
        acc += rates.rate(event)
        if u < acc:
            return event
    return catalog(register.env_kind)[NORMAL_EVENT_ID]


def apply_event(register: FaultRegister, event: NetworkEvent) -> FaultRegister:
    if event.env_kind is not register.env_kind:
        raise ValueError(f"{event.env_kind.value} event applied to a {register.env_kind.value} register")
    if event.is_normal:
        return register
    if event.is_clearing:
        if not register.is_active(event.paired_fault_id):
            raise ValueError(f"event {event.event_id} clears inactive fault {event.paired_fault_id}")
        return register.with_bit(event.paired_fault_id, 0)
    return register.with_bit(event.event_id, 1)


class FaultLedger:
    """Realized SINR contribution of every active fault, in arrival order."""

    def __init__(self):
        self._entries: "OrderedDict[int, float]" = OrderedDict()

    def __contains__(self, fault_id: int) -> bool:
        return fault_id in self._entries

    def __iter__(self) -> Iterator[Tuple[int, float]]:
        return iter(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, fault_id: int, delta_db: float) -> None:
        if fault_id in self._entries:
            raise ValueError(f"fault {fault_id} already has a recorded contribution")
        self._entries[fault_id] = float(delta_db)

    def stored(self, fault_id: int) -> float:
        if fault_id not in self._entries:
            raise ValueError(f"fault {fault_id} has no recorded contribution")
        return self._entries[fault_id]

    def release(self, fault_id: int) -> float:
        value = self.stored(fault_id)
        del self._entries[fault_id]
        return value

    def arrival_order(self) -> List[int]:
        return list(self._entries)

    def total_db(self) -> float:
        total = 0.0
        for value in self._entries.values():
            total += value
        return total

    def reset(self) -> None:
        self._entries.clear()


@dataclass
class EventContext:
    """What each contribution needs: draws, antenna, ledger and the lagged SINR terms."""
    events: EventConfig
    antenna: AntennaConfig
    rng: np.random.Generator
    ledger: FaultLedger
    gamma_lagged_db: Optional[float] = None
    neighbor_down_gamma_db: Optional[float] = None


def rank_loss_db(config: EventConfig) -> float:
    return 10.0 * math.log10(config.rank_full / config.rank_reduced)


def event_sinr_delta_db(event: NetworkEvent, context: EventContext) -> float:
    """SINR contribution of one event; faults impair (negative), clears negate the stored value."""
    if event.is_normal:
        return 0.0
    if event.is_clearing:
        return -context.ledger.stored(event.paired_fault_id)

    kind, ev = event.env_kind, event.event_id
    if ev == NEIGHBOR_DOWN_FAULT:
        if context.gamma_lagged_db is None or context.neighbor_down_gamma_db is None:
            raise ValueError("neighbor-down contribution needs gamma_lagged_db and neighbor_down_gamma_db")
        return context.gamma_lagged_db - context.neighbor_down_gamma_db
    if ev == FEEDER_FAULT[kind]:
        return -context.events.feeder_loss_db

    if kind is PropagationEnv.INDOOR and ev == VSWR_FAULT:
        v = context.rng.uniform(context.events.vswr_nominal, context.events.vswr_max)
        return -abs(vswr_delta_loss_db(context.events.vswr_nominal, v))
    if kind is PropagationEnv.OUTDOOR and ev == AZIMUTH_FAULT:
        theta = context.rng.uniform(-context.events.azimuth_max_deg, context.events.azimuth_max_deg)
        return azimuth_delta_db(context.antenna, theta)
    if kind is PropagationEnv.OUTDOOR and ev == TRANSMIT_DIVERSITY_FAULT:
        return -rank_loss_db(context.events)
    raise ValueError(f"unknown {kind.value} event id {ev}")


def realize_event(register: FaultRegister, event: NetworkEvent,
                  context: EventContext) -> Tuple[FaultRegister, float]:
    """
    Apply an event to the register and keep the ledger in step. A fault that is
    already active changes nothing; a clear releases the stored contribution.
    """
    if event.is_normal or (event.is_fault and register.is_active(event.event_id)):
        return register, 0.0
    delta = event_sinr_delta_db(event, context)
    updated = apply_event(register, event)
    if event.is_clearing:
        context.ledger.release(event.paired_fault_id)
    else:
        context.ledger.record(event.event_id, delta)
    return updated, delta


def neighbor_down_effective_sinr_db(serving_rx_mw: np.ndarray, interferer_rx_mw: np.ndarray,
                                    noise_mw: float, n_cells: int, config: RadioConfig,
                                    neighbor_indices: Sequence[int], ici_bound: Optional[float] = None) -> float:
    """
    Effective SINR with the failed neighbor's transmitters removed; each UE
    is floored at the neighbor-down lower bound.
    """
    indices = list(neighbor_indices)
    if not indices or any(not 0 <= k < interferer_rx_mw.shape[1] for k in indices):
        raise ValueError(f"neighbor indices {indices} outside {interferer_rx_mw.shape[1]} interferers")
    remaining = np.delete(interferer_rx_mw, indices, axis=1)
    exact = cluster_sinr_linear(serving_rx_mw, remaining, noise_mw, ici_bound)
    floor = np.array([
        neighbor_down_sinr_lower_bound(p, noise_mw, n_cells, config, ue_index=i).sinr_linear
        for i, p in enumerate(serving_rx_mw)
    ])
    return effective_sinr_db_from_linear(np.maximum(exact, floor))
