"""Seeded xoshiro256** generator, vectorised over independent lanes.

Lane ``k`` is seeded with outputs ``4k .. 4k+3`` of a SplitMix64 stream
started at the user seed. One generator step advances every lane once and
yields ``lanes`` words in lane order, so a draw of ``n`` words consumes
``ceil(n / lanes)`` steps and keeps the first ``n`` words (row-major over
steps x lanes). Surplus words of the final step are discarded.
"""

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_LANES = 256


def splitmix64(seed, count):
    """First ``count`` outputs of SplitMix64 from ``seed`` (pure Python)."""
    out = []
    state = seed & MASK64
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256:
    def __init__(self, seed, lanes=DEFAULT_LANES):
        words = splitmix64(seed, 4 * lanes)
        self.state = np.array(words, dtype=np.uint64).reshape(lanes, 4).T.copy()

    @classmethod
    def from_state(cls, state):
        """Build from explicit ``(4, lanes)`` state words (testing hook)."""
        obj = cls.__new__(cls)
        obj.state = np.array(state, dtype=np.uint64).reshape(4, -1).copy()
        return obj

    def step(self):
        s0, s1, s2, s3 = self.state
        result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3[:] = _rotl(s3, 45)
        return result

    def next_u64(self, n):
        lanes = self.state.shape[1]
        steps = -(-n // lanes)
        out = np.empty((steps, lanes), dtype=np.uint64)
        for i in range(steps):
            out[i] = self.step()
        return out.reshape(-1)[:n]

    def uniform(self, n):
        """``n`` doubles in [-1, 1) from the top 53 bits of each word."""
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return 2.0 * u - 1.0
