"""Portable seeded randomness.

Splits and patch streams must be reproducible across implementations, so the
generator is pinned to SplitMix64 rather than whatever the host library
currently ships. Bounded integers use rejection sampling (no modulo bias).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance ``state`` once. Returns ``(output, new_state)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


class SplitMix64:
    """Small 64-bit generator with an explicit, copyable integer state."""

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        if not 0 <= int(seed) <= _MASK:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.state = int(seed)

    def __repr__(self):
        return f"SplitMix64(state={self.state:#018x})"

    def next_u64(self) -> int:
        out, self.state = splitmix64_next(self.state)
        return out

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        # reject the low 2**64 mod n values so every residue is equally likely
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` with 53 bits of resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def split(self) -> "SplitMix64":
        """Derive an independent child stream (for parallel workers)."""
        return SplitMix64(self.next_u64())

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, walking from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
