"""
Radio model for celltune
Link budget, path loss, SINR and antenna building blocks shared by both environments.
All functions are pure.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from config.run_config import AntennaConfig, RadioConfig

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT_M_S = 299_792_458.0

# Declared validity ranges (MHz); inputs outside are clamped with a warning.
INDOOR_FREQ_RANGE_MHZ = (100.0, 6000.0)
# COST231-Hata fit range (1500-2000 MHz) extended to 2200 MHz to cover the 2.1 GHz band.
COST231_FREQ_RANGE_MHZ = (1500.0, 2200.0)

MIN_DISTANCE_M = 1.0


class PropagationEnv(str, Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"


AntennaPattern = AntennaConfig


def db_to_linear(value_db):
    if np.ndim(value_db):
        return np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value_linear):
    if np.ndim(value_linear):
        return 10.0 * np.log10(np.asarray(value_linear, dtype=float))
    return 10.0 * math.log10(value_linear)


dbm_to_mw = db_to_linear
mw_to_dbm = linear_to_db


@dataclass(frozen=True)
class SinrSample:
    ue_index: int
    tti: int
    sinr_linear: float
    sinr_db: float

    def __post_init__(self):
        if not self.sinr_linear > 0:
            raise ValueError(f"sinr_linear must be positive, got {self.sinr_linear}")

    @classmethod
    def from_linear(cls, ue_index: int, tti: int, sinr_linear: float) -> "SinrSample":
        return cls(ue_index=ue_index, tti=tti, sinr_linear=float(sinr_linear),
                   sinr_db=linear_to_db(float(sinr_linear)))


def _clamp_frequency(freq_mhz: float, valid: tuple, model: str) -> float:
    low, high = valid
    if freq_mhz < low or freq_mhz > high:
        clamped = min(max(freq_mhz, low), high)
        logger.warning(f"{model}: carrier {freq_mhz} MHz outside {low}-{high} MHz, clamped to {clamped} MHz")
        return clamped
    return freq_mhz


def free_space_intercept_db(freq_mhz: float) -> float:
    """Free-space loss at 1 m."""
    return 20.0 * math.log10(4.0 * math.pi * freq_mhz * 1e6 / SPEED_OF_LIGHT_M_S)


def path_loss_db(env: PropagationEnv, distance_m: float, config: RadioConfig) -> float:
    """
    Indoor: log-distance LOS model anchored at the 1 m free-space loss.
    Outdoor: COST231-Hata urban with the config's antenna heights.
    """
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    d = max(float(distance_m), MIN_DISTANCE_M)
    env = PropagationEnv(env)

    if env is PropagationEnv.INDOOR:
        f = _clamp_frequency(config.carrier_freq_mhz, INDOOR_FREQ_RANGE_MHZ, "indoor log-distance")
        return free_space_intercept_db(f) + 10.0 * config.path_loss_exponent * math.log10(d)

    f = _clamp_frequency(config.carrier_freq_mhz, COST231_FREQ_RANGE_MHZ, "COST231-Hata")
    log_f = math.log10(f)
    log_hb = math.log10(config.bs_height_m)
    a_hue = (1.1 * log_f - 0.7) * config.ue_height_m - (1.56 * log_f - 0.8)
    return (46.3 + 33.9 * log_f - 13.82 * log_hb - a_hue
            + (44.9 - 6.55 * log_hb) * math.log10(d / 1000.0)
            + config.metropolitan_correction_db)


def received_power_dbm(tx_power_dbm, path_loss_db, config: RadioConfig):
    """Forward link budget: P_TX + G_TX - L_m - L_p + G_UE."""
    return (tx_power_dbm + config.tx_antenna_gain_dbi - config.misc_loss_db
            - path_loss_db + config.ue_antenna_gain_dbi)


def noise_power_mw(config: RadioConfig, bandwidth_hz: Optional[float] = None) -> float:
    """Thermal noise over one PRB unless a bandwidth is given."""
    bw = bandwidth_hz if bandwidth_hz is not None else config.bandwidth_hz / config.n_prb
    return dbm_to_mw(config.noise_density_dbm_per_hz + 10.0 * math.log10(bw))


def ici_bound_mw(n_cells: int, config: RadioConfig) -> float:
    """Gaussian-noise ICI ceiling per interfering PRB: (|C|-1) P_BS^max / N_PRB."""
    return (n_cells - 1) * dbm_to_mw(config.max_bs_power_dbm) / config.n_prb


def sinr(ue_index: int, serving_rx_power_mw: float, interferer_rx_powers_mw: Sequence[float],
         noise_mw: float, tti: int = 0, ici_bound: Optional[float] = None) -> SinrSample:
    if not noise_mw > 0:
        raise ValueError(f"noise power must be positive, got {noise_mw}")
    interference = np.asarray(interferer_rx_powers_mw, dtype=float)
    if interference.size and np.any(interference < 0):
        raise ValueError("interferer powers must be non-negative")
    ici = float(interference.sum()) if interference.size else 0.0
    if ici_bound is not None:
        ici = min(ici, ici_bound)
    return SinrSample.from_linear(ue_index, tti, serving_rx_power_mw / (noise_mw + ici))


def cluster_sinr_linear(serving_rx_mw: np.ndarray, interferer_rx_mw: np.ndarray,
                        noise_mw: float, ici_bound: Optional[float] = None) -> np.ndarray:
    """Vectorized `sinr` over UEs: serving (N_UE,), interferers (N_UE, J)."""
    if not noise_mw > 0:
        raise ValueError(f"noise power must be positive, got {noise_mw}")
    ici = interferer_rx_mw.sum(axis=1) if interferer_rx_mw.size else np.zeros(len(serving_rx_mw))
    if ici_bound is not None:
        ici = np.minimum(ici, ici_bound)
    return serving_rx_mw / (noise_mw + ici)


def effective_sinr_db(samples: Sequence[SinrSample]) -> float:
    """dB of the linear mean across samples."""
    if not samples:
        raise ValueError("effective SINR needs at least one sample")
    return effective_sinr_db_from_linear(np.array([s.sinr_linear for s in samples]))


def effective_sinr_db_from_linear(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("effective SINR needs at least one sample")
    return float(10.0 * np.log10(values.mean()))


def azimuth_gain_db(pattern: AntennaPattern, theta_deg: float) -> float:
    """Horizontal pattern A(theta) = -min(12 (theta/theta_3dB)^2, A_m)."""
    if not -180.0 <= theta_deg <= 180.0:
        raise ValueError(f"azimuth angle must lie in [-180, 180], got {theta_deg}")
    return -min(12.0 * (theta_deg / pattern.theta_3db_deg) ** 2, pattern.max_attenuation_db)


def azimuth_delta_db(pattern: AntennaPattern, theta_deg: float) -> float:
    """Gain change when the direction of interest moves from boresight to theta."""
    return azimuth_gain_db(pattern, theta_deg) - azimuth_gain_db(pattern, pattern.boresight_deg)


def wrap_angle_deg(angle_deg):
    return (np.asarray(angle_deg) + 180.0) % 360.0 - 180.0


def vswr_delta_loss_db(v0: float, v: float) -> float:
    """Return-loss change when VSWR moves from v0 to v."""
    if not (v0 > 1.0 and v > 1.0):
        raise ValueError(f"VSWR values must exceed 1, got v0={v0}, v={v}")
    ratio = abs((v0 + 1.0) / (v0 - 1.0)) * abs((v - 1.0) / (v + 1.0))
    return 10.0 * math.log10(ratio ** 2)


def neighbor_down_sinr_lower_bound(serving_rx_power_mw: float, noise_mw: float, n_cells: int,
                                   config: RadioConfig, ue_index: int = 0, tti: int = 0) -> SinrSample:
    """P_UE / (N_0 + (|C| - 2) P_BS^max), the SINR floor once one neighbor is down."""
    if n_cells < 2:
        raise ValueError(f"a neighbor-down bound needs at least 2 cells, got {n_cells}")
    if not noise_mw > 0:
        raise ValueError(f"noise power must be positive, got {noise_mw}")
    interference = (n_cells - 2) * dbm_to_mw(config.max_bs_power_dbm)
    return SinrSample.from_linear(ue_index, tti, serving_rx_power_mw / (noise_mw + interference))
