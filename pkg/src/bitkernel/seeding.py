"""Deterministic seed derivation for independent generator streams.

Child seeds are produced by folding the parts (integers or short labels)
into a splitmix64 state one at a time.  The scheme is stable across
processes and Python versions, unlike the builtin hash().
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seed(*parts: int | str) -> int:
    """Mix integers and labels into one 64-bit seed."""
    state = 0x5851F42D4C957F2D
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for off in range(0, len(data), 8):
                chunk = int.from_bytes(data[off:off + 8], "little")
                state = _splitmix64(state ^ chunk)
        else:
            state = _splitmix64(state ^ (int(part) & _MASK))
    return state
