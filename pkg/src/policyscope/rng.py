"""Portable seeded random generator used for all episode sampling.

The generator is SplitMix64 (Steele, Lea & Flood 2014): a single 64-bit state
advanced by a fixed odd constant and finalized with two xor-multiply rounds.
It is implemented here in plain integer arithmetic so that a seed produces the
same stream on every platform and every library version, which keeps golden
trace fixtures stable.

Documented draw protocol (consumers rely on this order):

* ``random()``     -- one ``next_uint64`` call; top 53 bits scaled to [0, 1).
* ``categorical``  -- exactly one ``random()`` call, inverse-CDF over the
  probability vector in index order.
* ``normal()``     -- exactly two ``random()`` calls (Box-Muller, cosine
  branch); nothing is cached between calls.
* ``permutation``  -- Fisher-Yates from the top index down, one ``random()``
  per swap.

The full state is the single ``state`` integer, so sessions can snapshot and
restore a generator mid-episode at no cost.
"""

from __future__ import annotations

import math

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


class Rng:
    """SplitMix64 stream seeded with a 64-bit unsigned integer."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.state = seed & _MASK

    def next_uint64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_uint64() >> 11) * _INV_2_53

    def categorical(self, probs) -> int:
        """Sample an index from a probability vector (inverse CDF).

        Consumes exactly one uniform regardless of the outcome.  The vector is
        scanned in index order; float round-off in the cumulative sum is
        absorbed by clamping to the last index.
        """
        u = self.random()
        acc = 0.0
        last = 0
        for i, p in enumerate(probs):
            acc += p
            last = i
            if u < acc:
                return i
        return last

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.random() * n)

    def normal(self) -> float:
        """Standard normal draw via Box-Muller; consumes two uniforms."""
        u1 = self.random()
        if u1 <= 0.0:
            u1 = _INV_2_53
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        out = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def snapshot(self) -> int:
        return self.state

    @classmethod
    def restore(cls, state: int) -> "Rng":
        rng = cls(0)
        rng.state = state & _MASK
        return rng

    def spawn_seed(self) -> int:
        """Derive an independent child seed (one draw from this stream)."""
        return self.next_uint64()
