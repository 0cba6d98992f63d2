"""SplitMix64 generator and seed derivation.

Everything random in the package draws from :class:`SplitMix64` so outputs are
byte-reproducible across platforms and trivially re-implementable elsewhere.

Seed derivation::

    fnv1a64(s)        64-bit FNV-1a over the UTF-8 bytes of s
    mix(a, b, ...)    h = 0; for each part p: h = finalize((h ^ p) + GOLDEN)
    image seed        mix(global_seed, fnv1a64(image_id))
    instance seed     mix(global_seed, image_seed, instance_index)

where ``finalize`` is the SplitMix64 output function and all arithmetic is
modulo 2**64.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3


def finalize(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: str | bytes) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME64) & MASK64
    return h


def mix(*parts: int) -> int:
    h = 0
    for p in parts:
        h = finalize(((h ^ (p & MASK64)) + GOLDEN) & MASK64)
    return h


def image_seed(global_seed: int, image_id: str) -> int:
    return mix(global_seed, fnv1a64(image_id))


class SplitMix64:
    """Minimal 64-bit generator (Steele, Lea & Flood 2014).

    The state is explicit and the object is cheap to copy, so callers hand a
    generator down the pipeline instead of touching any global RNG.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return finalize(self.state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform draw in [low, high) built from the top 53 bits."""
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def copy(self) -> SplitMix64:
        return SplitMix64(self.state)

    def __repr__(self):
        return f"SplitMix64(state={self.state:#018x})"
