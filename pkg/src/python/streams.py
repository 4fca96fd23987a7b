"""Counter-based random streams.

Every random quantity is a pure function of (seed, purpose, index): the Philox
key holds the seed and the purpose tag, the top counter word holds the index.
Sampling order and worker count therefore never change results.
"""

import numpy as np

PURPOSES = {
    'graph': 1,
    'frequencies': 2,
    'initial_phases': 3,
}

_MASK64 = 2**64 - 1


def check_seed(seed):
    """Validate a 64-bit nonnegative seed."""
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be a 64-bit nonnegative integer, got {seed}")
    return seed


def stream(seed, purpose, index=0):
    """Generator for the (seed, purpose, index) stream."""
    seed = check_seed(seed)
    key = seed | (PURPOSES[purpose] << 64)
    counter = int(index) << 192
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def uniform_open(seed, purpose, size, index=0):
    """Uniforms strictly inside (0, 1); draw k is a function of (seed, purpose, index, k)."""
    bits = stream(seed, purpose, index).integers(0, 2**53, size=size, dtype=np.int64)
    return (bits.astype(np.float64) + 0.5) / 2.0**53


def uniform_phases(seed, n, low=-np.pi, high=np.pi):
    """Initial phases i.i.d. uniform on [low, high]."""
    return low + (high - low) * uniform_open(seed, 'initial_phases', n)
