"""Deterministic 64-bit seed derivation shared by splits, simulation and ensembles."""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(seed: int, index: int) -> int:
    """Derive a child seed from (seed, index) with wrap-around 64-bit arithmetic.

    seed_i = seed XOR (0x9E3779B97F4A7C15 * (index + 1) mod 2^64).  Pure and
    order-independent, so workers may derive their own seeds in parallel.
    """
    if index < 0:
        raise ValueError(f"index must be nonnegative, got {index}")
    return (int(seed) ^ ((_GOLDEN * (index + 1)) & _MASK64)) & _MASK64
