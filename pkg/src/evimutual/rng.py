"""Counter-based splitmix64 generator.

Output ``i`` of a stream with key ``k`` is ``mix(k + (i + 1) * 0x9E3779B97F4A7C15)``
where ``mix`` is the splitmix64 finaliser (shifts 30/27/31, multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).  Streams are keyed by hashing a
tuple of integers, so every (seed, purpose) pair gets an independent stream
and results do not depend on platform or numpy version.
"""
import math

import numpy as np

from ._accel import splitmix_uint64

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(*parts):
    key = 0
    for part in parts:
        key = _mix((key + _GOLDEN + (int(part) & _MASK)) & _MASK)
    return key


class SplitMix:
    """Sequential reader over one counter stream."""

    def __init__(self, *key_parts):
        self.key = stream_key(*key_parts)
        self.counter = 0

    def uint64(self, n):
        out = splitmix_uint64(self.key, self.counter, n)
        self.counter += n
        return out

    def uniform(self, n=None, low=0.0, high=1.0):
        """Doubles in [low, high) from the top 53 bits."""
        size = 1 if n is None else n
        u = (self.uint64(size) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        u = low + (high - low) * u
        return float(u[0]) if n is None else u

    def normal(self, n):
        """Standard normals by Box-Muller (cosine branch only)."""
        u1 = 1.0 - self.uniform(n)
        u2 = self.uniform(n)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
