"""SplitMix64, a tiny counter-based 64-bit generator.

Update rule (all arithmetic modulo 2^64)::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Uniform doubles are ``(out >> 11) * 2^-53`` in [0, 1). The k-th output only depends
on ``seed + k * GAMMA``, so blocks are generated vectorized and the stream is
reproducible in any language.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def splitmix64_scalar(state):
    """Reference scalar step: returns ``(new_state, output)`` using Python ints."""
    state = (state + GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return state, z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.state = seed

    def next_u64(self, count):
        """Next ``count`` raw outputs as a uint64 array."""
        k = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
        self.state = (self.state + count * GAMMA) & MASK64
        return z ^ (z >> np.uint64(31))

    def uniform(self, size=None):
        shape = () if size is None else np.atleast_1d(size)
        count = int(np.prod(shape)) if size is not None else 1
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return float(u[0]) if size is None else u.reshape(tuple(shape))

    def normal(self, size):
        """Box-Muller normals (two uniforms per output)."""
        shape = tuple(np.atleast_1d(size))
        count = int(np.prod(shape))
        u = self.uniform(2 * count).reshape(2, count)
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        return (r * np.cos(2.0 * np.pi * u[1])).reshape(shape)
