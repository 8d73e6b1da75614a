"""Seeded random streams.

Every stochastic component draws from numpy's counter-based Philox bit
generator keyed by (seed, stream, index...). The generator choice is frozen:
changing it would change every dataset, initialization and training run.
"""

import numpy as np

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Create an independent Philox generator for ``seed`` and a stream key.

    Args:
        seed: 64-bit integer seed (negative values wrap modulo 2^64)
        stream: Non-negative integers naming the purpose / step / sample

    Returns:
        A fresh numpy Generator
    """
    entropy = [int(seed) & _SEED_MASK, *(int(s) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
