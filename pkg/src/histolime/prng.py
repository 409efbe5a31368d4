"""Portable splitmix64 generator.

Split manifests and LIME perturbation masks must be reproducible from any language,
so neither uses numpy's or Python's generators. The stream is plain splitmix64:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

all arithmetic mod 2**64, state initialised to ``seed mod 2**64``. Because the state
advances by a constant, output ``i`` (0-based) depends only on ``seed + (i+1)*GAMMA``,
which lets :meth:`SplitMix64.block` produce many outputs at once with numpy.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def _mix(z):
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return _mix(self.state)

    def below(self, n):
        """Uniform-ish integer in ``[0, n)`` via the multiply-high reduction ``(x*n) >> 64``."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def block(self, count):
        """Next ``count`` outputs as a uint64 array; advances the state like ``count`` calls."""
        count = int(count)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GAMMA) & MASK64
        return z

    def bits(self, count):
        """``count`` bits taken least-significant first from consecutive outputs."""
        words = self.block((count + 63) // 64)
        raw = words.astype("<u8").view(np.uint8)
        return np.unpackbits(raw, bitorder="little")[:count]


def shuffle(items, rng):
    """Fisher-Yates in place, swapping ``i`` with ``rng.below(i + 1)`` for ``i = n-1 .. 1``."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.below(i + 1)
        items[i], items[j] = items[j], items[i]
    return items
