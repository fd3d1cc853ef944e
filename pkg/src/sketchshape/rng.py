"""Deterministic pseudo-random numbers for reproducible experiments.

The generator is SplitMix64: a 64-bit counter advances by the odd constant
0x9E3779B97F4A7C15 per draw, and each raw output is the counter passed
through an avalanche mixer (two xor-shift/multiply rounds, one final
xor-shift).  Uniform doubles take the top 53 bits of a raw output, so the
uniform stream is bit-reproducible wherever IEEE-754 doubles exist.  Normal
draws apply the Box-Muller transform to uniform pairs; they are reproducible
at the uniform level but may differ in the last ulp across libm
implementations, which is why normal streams are compared statistically
rather than bitwise.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

_TWO_PI = 2.0 * math.pi


class Rng:
    """SplitMix64 stream owned by a single consumer (never shared).

    Draw order is part of the contract: every method documents how many raw
    outputs it consumes, and block draws consume exactly the same raw stream
    as repeated scalar calls.  Normal draws are generated in pairs; when an
    odd number is requested the second half of the final pair is discarded,
    never cached.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK

    def next_u64(self) -> int:
        """Advance the state once and return one mixed 64-bit output."""
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def _raw_block(self, n: int) -> np.ndarray:
        """n raw outputs as uint64, consuming n states (same stream as n
        next_u64 calls)."""
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        z = np.uint64(self._state) + steps
        self._state = (self._state + n * _GOLDEN) & _MASK
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self) -> float:
        """One double in [0, 1): the top 53 bits of a raw output / 2^53."""
        return (self.next_u64() >> 11) * _INV53

    def uniform_block(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1), consuming n raw outputs."""
        return (self._raw_block(n) >> np.uint64(11)).astype(np.float64) * _INV53

    def uniform_matrix(self, rows: int, cols: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Row-major (rows x cols) matrix of low + (high - low) * uniform."""
        u = self.uniform_block(rows * cols).reshape(rows, cols)
        return low + (high - low) * u

    def normal(self) -> float:
        """One standard-normal draw; consumes one uniform pair."""
        return float(self.normal_matrix(1, 1)[0, 0])

    def normal_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Row-major (rows x cols) matrix of standard normals via Box-Muller.

        Each pair of entries (in row-major order) comes from one uniform
        pair (u1, u2) as sqrt(-2 ln u1) * (cos, sin)(2 pi u2), with u1
        shifted into (0, 1] so the log stays finite.  Consumes
        2 * ceil(rows * cols / 2) raw outputs.
        """
        count = rows * cols
        pairs = (count + 1) // 2
        bits = self._raw_block(2 * pairs) >> np.uint64(11)
        u1 = (bits[0::2].astype(np.float64) + 1.0) * _INV53  # (0, 1]
        u2 = bits[1::2].astype(np.float64) * _INV53          # [0, 1)
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = _TWO_PI * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(theta)
        out[1::2] = radius * np.sin(theta)
        return out[:count].reshape(rows, cols)

    def integer(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling raw outputs."""
        if n <= 0:
            raise ValueError(f"integer() needs n > 0, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by integer()."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integer(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list:
        """Shuffled list(range(n))."""
        idx = list(range(n))
        self.shuffle(idx)
        return idx
