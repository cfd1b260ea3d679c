"""Seeded xorshift64* pseudo-random generator.

Every source of randomness in the package (k-means++ seeding, dataset
shuffles, synthetic scenes, weight init) draws from this generator so that
a given seed produces bit-identical results on any platform and with any
numpy version. The recurrence is Vigna's xorshift64*: three xor-shifts
(12, 25, 27) followed by multiplication with 2685821657736338717.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 2685821657736338717
# splitmix64 increment, used to displace a zero seed (xorshift state must be nonzero)
_ZERO_SEED_STATE = 0x9E3779B97F4A7C15


class XorShift64Star:
    def __init__(self, seed: int):
        state = seed & _MASK
        self._state = state if state != 0 else _ZERO_SEED_STATE
        self._spare_normal = None

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s ^= (s << 25) & _MASK
        s ^= s >> 27
        self._state = s
        return (s * _MULT) & _MASK

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange() requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], inclusive on both ends."""
        return low + self.randrange(high - low + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self) -> float:
        """Standard normal deviate (Box-Muller, pairs cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so log() stays finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        """Array of n standard normal deviates (float64)."""
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)
