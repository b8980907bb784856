"""
Performance measures for celltune
Retainability, QPSK packet error and MOS for VoLTE; zero-forcing/waterfilling
spectral efficiency and throughput percentiles for SON.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm

from config.run_config import MetricsConfig, RadioConfig

logger = logging.getLogger(__name__)

_SINGULAR_CONDITION = 1e12


@dataclass
class MetricsReport:
    retainability: float
    mos: Optional[float] = None
    avg_cell_throughput_mbps: Optional[float] = None
    ue_throughput_peak_mbps: Optional[float] = None
    ue_throughput_avg_mbps: Optional[float] = None
    ue_throughput_edge_mbps: Optional[float] = None
    avg_spectral_efficiency: Optional[float] = None
    samples: int = 0

    def __post_init__(self):
        if not 0.0 <= self.retainability <= 1.0:
            raise ValueError(f"retainability must lie in [0, 1], got {self.retainability}")

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def _flatten(sinr_db_blocks) -> np.ndarray:
    if isinstance(sinr_db_blocks, np.ndarray):
        return sinr_db_blocks.ravel()
    blocks = [np.asarray(b, dtype=float).ravel() for b in sinr_db_blocks]
    return np.concatenate(blocks) if blocks else np.zeros(0)


def retainability(sinr_db_samples, gamma_min_db: float = 0.0) -> float:
    """1 - fraction of (TTI, UE) samples at or below the drop threshold."""
    values = _flatten(sinr_db_samples)
    if values.size == 0:
        raise ValueError("retainability needs at least one SINR sample")
    return 1.0 - float(np.count_nonzero(values <= gamma_min_db)) / values.size


def qpsk_symbol_error(sinr_linear) -> np.ndarray:
    q = norm.sf(np.sqrt(sinr_linear))
    return 2.0 * q * (1.0 - 0.5 * q)


def qpsk_packet_error_rate(sinr_linear, symbols_per_packet: int = 1, coding_gain_db: float = 0.0):
    """Packet error 1 - (1 - p_s)^symbols with the coding gain applied to the SINR first."""
    gamma = np.asarray(sinr_linear, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("SINR must be positive for the QPSK error mapping")
    if symbols_per_packet < 1:
        raise ValueError(f"symbols_per_packet must be >= 1, got {symbols_per_packet}")
    p_s = qpsk_symbol_error(gamma * 10.0 ** (coding_gain_db / 10.0))
    per = 1.0 - (1.0 - p_s) ** symbols_per_packet
    return float(per) if per.ndim == 0 else per


@dataclass(frozen=True)
class MosTable:
    """Piecewise-linear map from effective loss (PER x activity factor) to MOS, flat outside."""
    losses: Tuple[float, ...]
    scores: Tuple[float, ...]
    bitrate_kbps: float = 23.85

    def __post_init__(self):
        if len(self.losses) != len(self.scores) or len(self.losses) < 2:
            raise ValueError("MOS table needs at least two (loss, mos) points of equal length")
        if any(b <= a for a, b in zip(self.losses, self.losses[1:])):
            raise ValueError("MOS table losses must be strictly increasing")
        if any(b > a for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("MOS table scores must be non-increasing")
        if min(self.scores) < 1.0 or max(self.scores) > 4.5:
            raise ValueError("MOS scores must lie in [1.0, 4.5]")

    def score(self, loss: float) -> float:
        return float(np.interp(loss, self.losses, self.scores))


DEFAULT_MOS_TABLE = MosTable(
    losses=(0.00, 0.05, 0.10, 0.20, 0.30, 0.50),
    scores=(4.2, 3.6, 3.1, 2.3, 1.7, 1.0),
)


def load_mos_table(path: Union[str, Path], bitrate_kbps: float = 23.85) -> MosTable:
    """Two-column CSV with a `loss,mos` header."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows or not {"loss", "mos"} <= set(rows[0]):
        raise ValueError(f"MOS table {path} needs 'loss' and 'mos' columns")
    rows.sort(key=lambda r: float(r["loss"]))
    return MosTable(tuple(float(r["loss"]) for r in rows), tuple(float(r["mos"]) for r in rows), bitrate_kbps)


def mos(per: float, activity_factor: float = 0.7, bitrate_kbps: float = 23.85,
        table: MosTable = DEFAULT_MOS_TABLE) -> float:
    if not 0.0 <= per <= 1.0:
        raise ValueError(f"packet error rate must lie in [0, 1], got {per}")
    if not math.isclose(bitrate_kbps, table.bitrate_kbps):
        logger.warning(f"MOS table calibrated for {table.bitrate_kbps} kbps, scoring a {bitrate_kbps} kbps stream")
    return table.score(per * activity_factor)


def zero_forcing_gains(channel: np.ndarray) -> np.ndarray:
    """
    Post-equalization gains 1 / [(H^H H)^-1]_kk of the first min(n_rx, n_tx)
    streams. Streams are dropped from the end while the Gram matrix is singular.
    """
    h = np.asarray(channel)
    if h.ndim != 2:
        raise ValueError(f"channel must be an n_rx x n_tx matrix, got shape {h.shape}")
    streams = min(h.shape)
    while streams > 0:
        h_eff = h[:, :streams]
        gram = h_eff.conj().T @ h_eff
        if np.linalg.cond(gram) < _SINGULAR_CONDITION:
            return 1.0 / np.real(np.diag(np.linalg.inv(gram)))
        logger.debug(f"Singular channel with {streams} streams, dropping one")
        streams -= 1
    return np.zeros(0)


def waterfill(gains, total_power: float, noise: float) -> np.ndarray:
    """Power split maximizing sum log2(1 + p_k g_k / N0) with sum p_k = P."""
    g = np.asarray(gains, dtype=float)
    if total_power <= 0:
        raise ValueError(f"power budget must be positive, got {total_power}")
    if g.size == 0:
        return np.zeros(0)
    if np.any(g <= 0) or noise <= 0:
        raise ValueError("subchannel gains and noise must be positive")
    floors = noise / g
    ordered = np.sort(floors)
    for active in range(g.size, 0, -1):
        level = (total_power + ordered[:active].sum()) / active
        if level > ordered[active - 1]:
            break
    return np.maximum(level - floors, 0.0)


def capacity_bits(gains, powers, noise: float) -> float:
    g, p = np.asarray(gains, dtype=float), np.asarray(powers, dtype=float)
    return float(np.sum(np.log2(1.0 + p * g / noise)))


def spectral_efficiency(channel: np.ndarray, tx_power: float, noise: float, modulation_order: int = 64) -> float:
    """Bits per channel use after zero forcing and waterfilling, capped at log2 M."""
    gains = zero_forcing_gains(channel)
    if gains.size == 0:
        return 0.0
    powers = waterfill(gains, tx_power, noise)
    return min(capacity_bits(gains, powers, noise), math.log2(modulation_order))


def throughput_percentiles(samples) -> Tuple[float, float, float]:
    """(peak, average, edge) = (95th percentile, mean, 5th percentile), linear interpolation."""
    values = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("throughput percentiles need at least one sample")
    peak, edge = np.percentile(values, [95.0, 5.0], method="linear")
    return float(peak), float(values.mean()), float(edge)


def volte_report(sinr_db_blocks: Sequence[np.ndarray], config: MetricsConfig,
                 gamma_min_db: float = 0.0, table: Optional[MosTable] = None) -> MetricsReport:
    values = _flatten(sinr_db_blocks)
    per = qpsk_packet_error_rate(10.0 ** (values / 10.0), config.symbols_per_packet, config.coding_gain_db)
    table = table or DEFAULT_MOS_TABLE
    return MetricsReport(
        retainability=retainability(values, gamma_min_db),
        mos=mos(float(np.mean(per)), config.activity_factor, config.bitrate_kbps, table),
        samples=int(values.size),
    )


def son_report(sinr_db_blocks: Sequence[np.ndarray], channel_blocks: Sequence[np.ndarray],
               radio: RadioConfig, config: MetricsConfig, gamma_min_db: float = 0.0) -> MetricsReport:
    """
    sinr_db_blocks: per episode (T, N_UE); channel_blocks: per episode (T, N_UE, n_rx, n_tx).
    UE throughput is the per-episode time average; cell throughput sums the UEs.
    """
    ue_throughputs: List[float] = []
    cell_throughputs: List[float] = []
    efficiencies: List[float] = []
    for sinr_db, channels in zip(sinr_db_blocks, channel_blocks):
        sinr_db = np.asarray(sinr_db, dtype=float)
        if sinr_db.size == 0:
            continue
        n_ues = sinr_db.shape[1]
        share_hz = radio.bandwidth_hz / n_ues
        gamma = 10.0 ** (sinr_db / 10.0)
        per = qpsk_packet_error_rate(gamma, config.symbols_per_packet, config.coding_gain_db)
        se = np.array([
            [spectral_efficiency(channels[t][i], 1.0, 1.0 / gamma[t, i], radio.modulation_order)
             for i in range(n_ues)]
            for t in range(sinr_db.shape[0])
        ])
        rate_mbps = se * share_hz * (1.0 - per) / 1e6
        per_ue = rate_mbps.mean(axis=0)
        ue_throughputs.extend(per_ue.tolist())
        cell_throughputs.append(float(per_ue.sum()))
        efficiencies.extend(se.ravel().tolist())
    if not ue_throughputs:
        raise ValueError("SON report needs at least one non-empty episode")
    peak, avg, edge = throughput_percentiles(ue_throughputs)
    return MetricsReport(
        retainability=retainability(sinr_db_blocks, gamma_min_db),
        avg_cell_throughput_mbps=float(np.mean(cell_throughputs)),
        ue_throughput_peak_mbps=peak,
        ue_throughput_avg_mbps=avg,
        ue_throughput_edge_mbps=edge,
        avg_spectral_efficiency=float(np.mean(efficiencies)),
        samples=len(efficiencies),
    )


def mean_report(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Field-wise mean across seeds; optional fields stay None when any report lacks them."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot average zero reports")
    merged: Dict[str, Optional[float]] = {}
    for name in MetricsReport.__dataclass_fields__:
        values = [getattr(r, name) for r in reports]
        if name == "samples":
            merged[name] = int(sum(values))
        elif any(v is None for v in values):
            merged[name] = None
        else:
            merged[name] = float(np.mean(values))
    return MetricsReport(**merged)


def format_retainability_table(results: Mapping[str, MetricsReport]) -> str:
    """Power-control comparison: one column per algorithm."""
    names = list(results)
    header = "| Metric | " + " | ".join(names) + " |"
    rule = "|---" * (len(names) + 1) + "|"
    retain = "| Retainability | " + " | ".join(f"{100.0 * results[n].retainability:.2f}%" for n in names) + " |"
    score = "| MOS | " + " | ".join(
        "-" if results[n].mos is None else f"{results[n].mos:.2f}" for n in names) + " |"
    return "\n".join([header, rule, retain, score])


SON_TABLE_ROWS = (
    ("Average cell throughput (Mbps)", "avg_cell_throughput_mbps"),
    ("Peak UE throughput (Mbps)", "ue_throughput_peak_mbps"),
    ("Average UE throughput (Mbps)", "ue_throughput_avg_mbps"),
    ("Edge UE throughput (Mbps)", "ue_throughput_edge_mbps"),
    ("Average spectral efficiency (bits/cu)", "avg_spectral_efficiency"),
)


def format_son_table(results: Mapping[Tuple[str, int], MetricsReport]) -> str:
    """Fault-management comparison: rows per metric, columns per (q, algorithm)."""
    keys = sorted(results, key=lambda k: (k[1], k[0]))
    header = "| Metric | " + " | ".join(f"q={q} {algorithm}" for algorithm, q in keys) + " |"
    rule = "|---" * (len(keys) + 1) + "|"
    lines = [header, rule]
    for label, field_name in SON_TABLE_ROWS:
        cells = []
        for key in keys:
            value = getattr(results[key], field_name)
            cells.append("-" if value is None else f"{value:.2f}")
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines)
