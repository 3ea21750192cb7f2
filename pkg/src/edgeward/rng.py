"""Named deterministic RNG substreams.

Every run takes one seed; components draw from substreams keyed by purpose
(model-init, attack, noise, ...) so adding a consumer never shifts the draws
another component sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the (seed, name) substream, stable across processes."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
