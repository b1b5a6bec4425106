"""Deterministic replicate seeding.

Every replicate i of a campaign with master seed s receives the seed
``derive_seed(s, i)``: the 64-bit avalanche finalizer of SplitMix64 applied
to s XOR i.  The finalizer is a bijection on 64-bit integers, so distinct
replicate indices always map to distinct seeds (for any fixed master seed),
and distinct master seeds map to distinct seeds at a fixed index.
"""

from __future__ import annotations

__all__ = ["derive_seed"]

_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, replicate_index: int) -> int:
    """Mix master_seed XOR replicate_index through the SplitMix64 finalizer."""
    z = (int(master_seed) ^ int(replicate_index)) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK
