"""
Run configuration for celltune
Flat `key = value` files (parsed with python-dotenv) validated by pydantic models.
Every default is the out-of-box value from the radio and hyperparameter tables.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for unreadable config files and unknown keys."""


class EnvironmentKind(str, Enum):
    VOLTE = "volte"
    SON = "son"


class Algorithm(str, Enum):
    PROPOSED = "proposed"
    FPA = "fpa"
    MAX_SINR = "maxsinr"
    RANDOM = "random"
    FIFO = "fifo"


class Layout(str, Enum):
    INDOOR_SQUARE = "indoor-square"
    OUTDOOR_HEX = "outdoor-hex"


class PowerControlScope(str, Enum):
    """Which SPS allocations one closed-loop power command adjusts."""
    CELL = "cell"
    ROUND_ROBIN = "round-robin"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RadioConfig(_Section):
    max_bs_power_dbm: float = 33.0
    initial_tx_power_dbm: float = 13.0
    tx_antenna_gain_dbi: float = 4.0
    ue_antenna_gain_dbi: float = -1.0
    misc_loss_db: float = 0.0
    noise_density_dbm_per_hz: float = -174.0
    bandwidth_hz: float = 20e6
    n_prb: int = 100
    carrier_freq_mhz: float = 2600.0
    bs_height_m: float = 10.0
    ue_height_m: float = 1.5
    n_tx_antennas: int = 2
    n_rx_antennas: int = 2
    path_loss_exponent: float = 1.8
    metropolitan_correction_db: float = 3.0
    shadowing_std_db: float = 0.0
    modulation_order: int = 64

    @model_validator(mode="after")
    def _check_invariants(self) -> "RadioConfig":
        if self.max_bs_power_dbm < self.initial_tx_power_dbm:
            raise ValueError("max_bs_power_dbm must be >= initial_tx_power_dbm")
        if self.n_prb < 1:
            raise ValueError("n_prb must be >= 1")
        if not self.n_tx_antennas >= self.n_rx_antennas >= 1:
            raise ValueError("antenna counts must satisfy n_tx >= n_rx >= 1")
        if self.bandwidth_hz <= 0 or self.carrier_freq_mhz <= 0:
            raise ValueError("bandwidth and carrier frequency must be positive")
        if self.modulation_order < 2:
            raise ValueError("modulation_order must be >= 2")
        return self


class AntennaConfig(_Section):
    theta_3db_deg: float = Field(default=65.0, gt=0)
    max_attenuation_db: float = Field(default=20.0, gt=0)
    boresight_deg: float = 0.0


class TopologyConfig(_Section):
    layout: Layout = Layout.INDOOR_SQUARE
    cell_size_m: float = Field(default=10.0, gt=0)
    ppp_intensity: float = Field(default=0.5, gt=0)
    max_ues_per_bs: int = Field(default=10, ge=1)
    ues_per_bs: int = Field(default=10, ge=1)
    sectors_per_site: int = Field(default=3, ge=1)


class EventConfig(_Section):
    p_fault: float = 1.0 / 11.0
    p_clear: float = 1.0 / 11.0
    feeder_loss_db: float = 3.0
    vswr_nominal: float = 1.5
    vswr_max: float = 3.0
    azimuth_max_deg: float = 30.0
    rank_full: int = 4
    rank_reduced: int = 2

    @model_validator(mode="after")
    def _check_invariants(self) -> "EventConfig":
        if not 0.0 <= self.p_fault < 1.0 or not 0.0 <= self.p_clear < 1.0:
            raise ValueError("event probabilities must lie in [0, 1)")
        if self.vswr_nominal <= 1.0 or self.vswr_max <= self.vswr_nominal:
            raise ValueError("VSWR draw requires 1 < vswr_nominal < vswr_max")
        if not self.rank_full >= self.rank_reduced >= 1:
            raise ValueError("rank_full must be >= rank_reduced >= 1")
        return self


class EnvConfig(_Section):
    episode_tti: int = Field(default=20, ge=1)
    scheduler_period: int = Field(default=20, ge=1)
    gamma_initial_db: float = 4.0
    gamma_target_db: float = 6.0
    gamma_min_db: float = 0.0
    r_min: float = -10.0
    r_max: float = 10.0
    seed_initial_fault: bool = True
    power_unbounded: bool = False
    power_control_scope: PowerControlScope = PowerControlScope.CELL
    stall_window: int = Field(default=2, ge=1)


class AgentConfig(_Section):
    learning_rate: float = Field(default=0.2, gt=0, lt=1)
    discount: float = Field(default=0.995, ge=0, lt=1)
    epsilon: float = Field(default=1.0, ge=0, le=1)
    epsilon_min: float = Field(default=0.01, ge=0, le=1)
    epsilon_decay: float = Field(default=0.99, gt=0, le=1)
    step_size: float = Field(default=0.2, gt=0)
    hidden_width: int = Field(default=24, ge=1)
    batch_size: int = Field(default=32, ge=1)
    replay_capacity: int = Field(default=10_000, ge=2)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    observe_fault_register: bool = False
    eval_epsilon: float = Field(default=0.01, ge=0, le=1)

    @model_validator(mode="after")
    def _check_invariants(self) -> "AgentConfig":
        if self.epsilon < self.epsilon_min:
            raise ValueError("epsilon must be >= epsilon_min")
        if self.replay_capacity <= self.batch_size:
            raise ValueError("replay_capacity must exceed batch_size")
        return self


class MetricsConfig(_Section):
    activity_factor: float = Field(default=0.7, ge=0, le=1)
    bitrate_kbps: float = Field(default=23.85, gt=0)
    symbols_per_packet: int = Field(default=1, ge=1)
    coding_gain_db: float = 0.0
    mos_table_path: str = ""


_SECTIONS = {
    "radio": RadioConfig,
    "antenna": AntennaConfig,
    "topology": TopologyConfig,
    "events": EventConfig,
    "env": EnvConfig,
    "agent": AgentConfig,
    "metrics": MetricsConfig,
}


class RunConfig(_Section):
    environment: EnvironmentKind = EnvironmentKind.VOLTE
    algorithm: Algorithm = Algorithm.PROPOSED
    episodes: int = Field(default=1000, ge=0)
    eval_episodes: int = Field(default=500, ge=1)
    seed: int = Field(default=0, ge=0)
    output_dir: str = ""
    radio: RadioConfig = RadioConfig()
    antenna: AntennaConfig = AntennaConfig()
    topology: TopologyConfig = TopologyConfig()
    events: EventConfig = EventConfig()
    env: EnvConfig = EnvConfig()
    agent: AgentConfig = AgentConfig()
    metrics: MetricsConfig = MetricsConfig()

    @model_validator(mode="after")
    def _check_algorithm(self) -> "RunConfig":
        volte_only = {Algorithm.FPA, Algorithm.MAX_SINR}
        son_only = {Algorithm.RANDOM, Algorithm.FIFO}
        if self.environment is EnvironmentKind.VOLTE and self.algorithm in son_only:
            raise ValueError(f"algorithm {self.algorithm.value} needs the son environment")
        if self.environment is EnvironmentKind.SON and self.algorithm in volte_only:
            raise ValueError(f"algorithm {self.algorithm.value} needs the volte environment")
        return self

    @classmethod
    def for_environment(cls, kind: Union[EnvironmentKind, str], **overrides: Any) -> "RunConfig":
        """Defaults for one environment, with optional top-level overrides."""
        kind = EnvironmentKind(kind)
        flat = default_flat(kind)
        flat.update({key: str(value) for key, value in overrides.items()})
        return cls.from_flat(flat)

    def with_updates(self, **overrides: Any) -> "RunConfig":
        """Copy with flat-key overrides (e.g. {"topology.ues_per_bs": 50})."""
        flat = self.to_flat()
        for key, value in overrides.items():
            flat[key.replace("__", ".")] = _format_value(value)
        return RunConfig.from_flat(flat)

    def to_flat(self) -> Dict[str, str]:
        flat: Dict[str, str] = {}
        for key, value in self.model_dump().items():
            if key in _SECTIONS:
                for inner_key, inner_value in value.items():
                    flat[f"{key}.{inner_key}"] = _format_value(inner_value)
            else:
                flat[key] = _format_value(value)
        return flat

    @classmethod
    def from_flat(cls, flat: Dict[str, str]) -> "RunConfig":
        nested: Dict[str, Any] = {}
        for key, value in flat.items():
            if value is None:
                raise ConfigError(f"config key '{key}' has no value")
            if "." in key:
                section, inner_key = key.split(".", 1)
                if section not in _SECTIONS:
                    raise ConfigError(f"unknown config section '{section}' in key '{key}'")
                if inner_key not in _SECTIONS[section].model_fields:
                    raise ConfigError(f"unknown config key '{key}'")
                nested.setdefault(section, {})[inner_key] = value
            else:
                if key not in cls.model_fields or key in _SECTIONS:
                    raise ConfigError(f"unknown config key '{key}'")
                nested[key] = value
        return cls.model_validate(nested)


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def default_flat(kind: Union[EnvironmentKind, str]) -> Dict[str, str]:
    """Flat defaults for an environment kind."""
    kind = EnvironmentKind(kind)
    flat = RunConfig().to_flat()
    flat["environment"] = kind.value
    if kind is EnvironmentKind.SON:
        flat.update({
            "radio.max_bs_power_dbm": "46.0",
            "radio.initial_tx_power_dbm": "46.0",
            "radio.tx_antenna_gain_dbi": "15.0",
            "radio.ue_antenna_gain_dbi": "0.0",
            "radio.bandwidth_hz": "10000000.0",
            "radio.n_prb": "50",
            "radio.carrier_freq_mhz": "2100.0",
            "radio.bs_height_m": "25.0",
            "radio.n_tx_antennas": "4",
            "radio.n_rx_antennas": "2",
            "radio.shadowing_std_db": "8.0",
            "topology.layout": Layout.OUTDOOR_HEX.value,
            "topology.cell_size_m": "200.0",
            "topology.ues_per_bs": "10",
            "events.p_fault": repr(1.0 / 9.0),
            "events.p_clear": "0.0",
            "events.feeder_loss_db": "6.0",
            "env.episode_tti": "10",
            "env.scheduler_period": "1",
            "agent.epsilon_decay": "0.91",
            "agent.step_size": "0.001",
            "agent.observe_fault_register": "true",
            "agent.eval_epsilon": "0.0",
        })
    return flat


def load_run_config(path: Union[str, Path], kind: Union[EnvironmentKind, str, None] = None) -> RunConfig:
    """
    Load a flat key=value run config. Keys absent from the file take the
    defaults of the file's `environment` (or `kind` when the file omits it).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = dotenv_values(path)
    except Exception as e:
        raise ConfigError(f"could not parse config file {path}: {e}") from e

    file_kind = values.get("environment") or kind or EnvironmentKind.VOLTE
    try:
        flat = default_flat(file_kind)
    except ValueError as e:
        raise ConfigError(f"unknown environment '{file_kind}' in {path}") from e
    flat.update(values)
    try:
        config = RunConfig.from_flat(flat)
    except ValidationError:
        logger.error(f"Config validation failed for {path}")
        raise
    logger.debug(f"Loaded run config from {path} ({config.environment.value}/{config.algorithm.value})")
    return config


def save_run_config(config: RunConfig, path: Union[str, Path]) -> None:
    path = Path(path)
    lines = ["# celltune run configuration"]
    lines += [f"{key}={value}" for key, value in config.to_flat().items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
