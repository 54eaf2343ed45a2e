"""Derivation of independent, reproducible random streams from one seed.

Every consumer draws from a child stream keyed by (seed, stream tag, ...),
so adding a consumer never perturbs the draws of another.
"""

from __future__ import annotations

import numpy as np

STREAM_SPLIT = 1
STREAM_SHUFFLE = 2
STREAM_MODEL = 3
STREAM_SYNTH = 4


def child_seed(*key: int) -> int:
    """A 32-bit seed derived deterministically from an integer key path."""
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def child_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))
