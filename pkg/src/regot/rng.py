"""Seeded random streams.

All randomness goes through Philox (a counter-based generator) keyed by a
SeedSequence built from integer path components, so a stream is fully
determined by ``(seed, *path)`` on every platform.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for ``seed`` split along ``path``."""
    entropy = [int(seed) & 0xFFFFFFFF, *(int(p) & 0xFFFFFFFF for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child integer seed, e.g. per-iteration rollout seeds."""
    entropy = [int(seed) & 0xFFFFFFFF, *(int(p) & 0xFFFFFFFF for p in path)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])
