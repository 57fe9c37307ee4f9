"""Counter-based PRNG used for splits and augmentation.

Dataset splits and augmentation draws must be reproducible across processes,
platforms, and reimplementations, so they are driven by SplitMix64 — a named
64-bit counter-based generator with a fully specified output mapping — rather
than by a library RNG whose stream is an implementation detail.

Output mapping (all arithmetic mod 2**64):

* state update: ``state += 0x9E3779B97F4A7C15``
* output: ``z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^= (z >> 31)``
* bounded integers ``below(n)``: rejection sampling — draw 64-bit words,
  reject values ``>= 2**64 - (2**64 % n)``, return ``word % n``
* unit floats: ``(word >> 11) * 2**-53``
* shuffle: Fisher–Yates from the last index down, ``j = below(i + 1)``
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *parts: int) -> int:
    """Derive a child seed from ``seed`` and integer context tags.

    Each tag is folded in as ``state = mix(state ^ (tag + 1) * GOLDEN)``,
    so (seed, epoch, step, ...) chains give independent, reproducible streams.
    """
    state = seed & _MASK
    for part in parts:
        state = _mix(state ^ (((part + 1) * _GOLDEN) & _MASK))
    return state


class SplitMix64:
    """SplitMix64 stream with the bounded-int/float mapping documented above."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            word = self.next_u64()
            if word < limit:
                return word % n

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def shuffle(self, items: list) -> None:
        """In-place Fisher–Yates shuffle (last index downward)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
