"""
Named, independent random streams derived from one master seed.
Adding a new consumer never perturbs the draws of the existing ones.
"""
import hashlib
import logging
from typing import Dict

import numpy as np

logger = logging.getLogger(__name__)

STREAM_NAMES = ("placement", "events", "agent", "channel", "shadowing", "evaluation")


def _stable_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


class RngStreams:
    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(_stable_key(name),))
            self._streams[name] = np.random.Generator(np.random.PCG64(sequence))
        return self._streams[name]

    def __getattr__(self, name: str) -> np.random.Generator:
        if name in STREAM_NAMES:
            return self.stream(name)
        raise AttributeError(name)

    def episode_seed(self, index: int, purpose: str = "training") -> int:
        """Deterministic per-episode seed; training and evaluation never share one."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(_stable_key(purpose), int(index)))
        return int(sequence.generate_state(1, dtype=np.uint32)[0])
