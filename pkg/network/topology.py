"""
Cluster geometry: indoor square rooms and the outdoor hexagonal cluster,
plus the user drops used at every episode reset.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from config.run_config import Layout

logger = logging.getLogger(__name__)

HEX_NEIGHBOR_ANGLES_DEG = tuple(30.0 + 60.0 * k for k in range(6))


@dataclass(frozen=True)
class Transmitter:
    """One interfering base station (or sector) seen from the serving cell."""
    position: Tuple[float, float]
    boresight_deg: float = 0.0
    site_index: int = 0


@dataclass
class Topology:
    layout: Layout
    cell_size_m: float
    serving_position: Tuple[float, float] = (0.0, 0.0)
    neighbor_positions: List[Tuple[float, float]] = field(default_factory=list)
    ue_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    serving_boresight_deg: float = 0.0
    interferers: List[Transmitter] = field(default_factory=list)

    def __post_init__(self):
        if self.serving_position != (0.0, 0.0):
            raise ValueError("serving base station must sit at the origin")
        expected = 4 if self.layout is Layout.INDOOR_SQUARE else 6
        if len(self.neighbor_positions) != expected:
            raise ValueError(f"{self.layout.value} layout needs {expected} neighbors, got {len(self.neighbor_positions)}")
        for x, y in self.neighbor_positions:
            if not math.isclose(math.hypot(x, y), self.cell_size_m, rel_tol=1e-9):
                raise ValueError(f"neighbor at ({x}, {y}) is not at distance {self.cell_size_m}")
        self.ue_positions = np.asarray(self.ue_positions, dtype=float).reshape(-1, 2)

    @property
    def n_cells(self) -> int:
        """|C|: serving cell plus every interfering transmitter."""
        return 1 + len(self.interferers)

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    def with_ues(self, ue_positions: np.ndarray) -> "Topology":
        return Topology(
            layout=self.layout,
            cell_size_m=self.cell_size_m,
            neighbor_positions=list(self.neighbor_positions),
            ue_positions=ue_positions,
            serving_boresight_deg=self.serving_boresight_deg,
            interferers=list(self.interferers),
        )

    def serving_distances_m(self) -> np.ndarray:
        return np.hypot(self.ue_positions[:, 0], self.ue_positions[:, 1])

    def interferer_distances_m(self) -> np.ndarray:
        """(N_UE, J) distances from every UE to every interferer."""
        tx = np.array([t.position for t in self.interferers], dtype=float).reshape(-1, 2)
        delta = self.ue_positions[:, None, :] - tx[None, :, :]
        return np.hypot(delta[..., 0], delta[..., 1])

    def serving_angles_deg(self) -> np.ndarray:
        """UE bearing from the serving antenna, relative to its boresight."""
        bearing = np.degrees(np.arctan2(self.ue_positions[:, 1], self.ue_positions[:, 0]))
        return (bearing - self.serving_boresight_deg + 180.0) % 360.0 - 180.0

    def interferer_angles_deg(self) -> np.ndarray:
        tx = np.array([t.position for t in self.interferers], dtype=float).reshape(-1, 2)
        boresight = np.array([t.boresight_deg for t in self.interferers], dtype=float)
        delta = self.ue_positions[:, None, :] - tx[None, :, :]
        bearing = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
        return (bearing - boresight[None, :] + 180.0) % 360.0 - 180.0


def indoor_square(cell_size_m: float, ue_positions=None) -> Topology:
    """Serving room at the origin, one neighbor room on each cardinal axis."""
    L = float(cell_size_m)
    neighbors = [(L, 0.0), (-L, 0.0), (0.0, L), (0.0, -L)]
    return Topology(
        layout=Layout.INDOOR_SQUARE,
        cell_size_m=L,
        neighbor_positions=neighbors,
        ue_positions=np.zeros((0, 2)) if ue_positions is None else ue_positions,
        interferers=[Transmitter(position=p, site_index=k + 1) for k, p in enumerate(neighbors)],
    )


def outdoor_hex(inter_site_distance_m: float, sectors_per_site: int = 3, ue_positions=None) -> Topology:
    """
    Seven-site hexagonal cluster. The serving cell is sector 0 of the centre
    site; the remaining sectors of all seven sites interfere.
    """
    isd = float(inter_site_distance_m)
    sites = [(0.0, 0.0)] + [
        (isd * math.cos(math.radians(a)), isd * math.sin(math.radians(a))) for a in HEX_NEIGHBOR_ANGLES_DEG
    ]
    boresights = [360.0 * s / sectors_per_site for s in range(sectors_per_site)]
    interferers = []
    for site_index, position in enumerate(sites):
        for sector, boresight in enumerate(boresights):
            if site_index == 0 and sector == 0:
                continue
            interferers.append(Transmitter(position=position, boresight_deg=boresight, site_index=site_index))
    return Topology(
        layout=Layout.OUTDOOR_HEX,
        cell_size_m=isd,
        neighbor_positions=sites[1:],
        ue_positions=np.zeros((0, 2)) if ue_positions is None else ue_positions,
        serving_boresight_deg=boresights[0],
        interferers=interferers,
    )


def place_users_indoor(intensity: float, cell_size_m: float, cap: int, rng: np.random.Generator) -> np.ndarray:
    """
    Homogeneous PPP drop in the serving room: count ~ Poisson(lambda L^2)
    truncated to [1, cap], positions uniform on [-L/2, L/2]^2.
    """
    if not intensity > 0 or not cell_size_m > 0:
        raise ValueError("PPP intensity and room size must be positive")
    count = int(rng.poisson(intensity * cell_size_m ** 2))
    n = min(max(count, 1), cap)
    half = cell_size_m / 2.0
    return rng.uniform(-half, half, size=(n, 2))


def _inside_hexagon(points: np.ndarray, inter_site_distance_m: float) -> np.ndarray:
    inside = np.ones(len(points), dtype=bool)
    for angle in HEX_NEIGHBOR_ANGLES_DEG:
        normal = np.array([math.cos(math.radians(angle)), math.sin(math.radians(angle))])
        inside &= points @ normal <= inter_site_distance_m / 2.0
    return inside


def place_users_hex_sector(count: int, inter_site_distance_m: float, boresight_deg: float,
                           rng: np.random.Generator, min_distance_m: float = 10.0) -> np.ndarray:
    """Uniform drop of `count` UEs in the serving sector's wedge of the centre hexagon."""
    if count < 1:
        raise ValueError(f"need at least one UE, got {count}")
    radius = inter_site_distance_m / math.sqrt(3.0)
    accepted: List[np.ndarray] = []
    total = 0
    while total < count:
        batch = 4 * (count - total) + 8
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=batch))
        theta = np.radians(boresight_deg + rng.uniform(-60.0, 60.0, size=batch))
        points = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        keep = _inside_hexagon(points, inter_site_distance_m) & (r >= min_distance_m)
        points = points[keep][: count - total]
        accepted.append(points)
        total += len(points)
    return np.vstack(accepted)
