"""
Counter-based random streams.

Every random stream in the package is a Philox generator keyed by
(master seed, site, stream id). Streams for different sites never share
state, so the order in which sites are sampled does not matter, and a
replica seed can be derived from a master seed without drawing anything.
"""

from typing import Iterable

import numpy as np

MASK64 = (1 << 64) - 1
STREAM_BITS = 8


def split_seed(seed: int, *key: int) -> int:
    """
    Derive a child seed from ``seed`` and an integer key path.

    Args:
        seed: Master seed (any non-negative integer, reduced to 64 bits)
        key: Integer path, e.g. (eps_index, replica_index)

    Returns:
        A 64-bit child seed
    """
    sequence = np.random.SeedSequence(seed & MASK64, spawn_key=tuple(int(k) for k in key))
    state = sequence.generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def stream_generator(seed: int, site: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, site, stream) triple."""
    if not 0 <= stream < (1 << STREAM_BITS):
        raise ValueError(f"stream id out of range: {stream}")
    key = np.array([seed & MASK64, ((int(site) << STREAM_BITS) | stream) & MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replica_seeds(seed: int, count: int, *prefix: int) -> Iterable[int]:
    """Seeds for ``count`` replicas below an optional key prefix."""
    for index in range(count):
        yield split_seed(seed, *prefix, index)
