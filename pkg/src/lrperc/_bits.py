"""Stateless per-edge hashing.

Every random decision in the package is a pure function of
(seed, stream, canonical edge).  The mixer is the splitmix64 finalizer folded
over the stream id and one 64-bit word per coordinate axis; each word packs
the zigzag-encoded axis coordinates of both endpoints, lexicographically
smaller endpoint first.  Both backends (compiled and NumPy) reproduce these
integers bit for bit; this module is the readable reference implementation
and the shared source of the constants.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# Coordinates must zigzag-encode into 32 bits so a (coord, coord) pair packs
# into one mix word.
COORD_LIMIT = 1 << 31


def mix(h: int, w: int) -> int:
    z = ((h ^ w) + GOLDEN) & MASK64
    z ^= z >> 30
    z = (z * MIX1) & MASK64
    z ^= z >> 27
    z = (z * MIX2) & MASK64
    z ^= z >> 31
    return z


def zigzag32(c: int) -> int:
    c = int(c)
    if not -COORD_LIMIT < c < COORD_LIMIT:
        raise OverflowError(f"coordinate {c} outside 32-bit zigzag range")
    return ((c << 1) ^ (c >> 63)) & 0xFFFFFFFF if c < 0 else (c << 1)


def edge_hash(seed: int, stream: int, a: tuple[int, ...], b: tuple[int, ...]) -> int:
    """64-bit hash of a canonical edge; (a, b) must already satisfy a < b."""
    h = mix(int(seed) & MASK64, int(stream) & MASK64)
    for ai, bi in zip(a, b):
        h = mix(h, (zigzag32(ai) << 32) | zigzag32(bi))
    return h


def hash_to_unit(h: int) -> float:
    return (h >> 11) * 2.0**-53


def threshold_word(p: float) -> int:
    """Largest 53-bit word t with hash_to_unit(t << 11) <= p.

    open(u <= p) over the 53-bit grid equals (h >> 11) <= floor(p * 2^53);
    the scaling by 2^53 is exact in binary64.
    """
    if p <= 0.0:
        return -1
    if p >= 1.0:
        return (1 << 53) - 1
    return int(p * 9007199254740992.0)  # floor, product is exact
