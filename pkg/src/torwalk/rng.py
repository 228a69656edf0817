"""Seed handling: splitmix64 streams shared by python and compiled kernels.

Every simulation task derives its stream state by folding integer keys
(model tag, system size, replica index, ...) into a base seed with the
splitmix64 finalizer.  A stream then steps by the golden-ratio gamma and
finalizes each output word.  Distinct keys land on effectively random
offsets of the same period-2**64 orbit; for desk-scale draw counts
(<= 2**40 per stream) the chance of two streams overlapping is < 2**-14
per pair, and the derivation is deterministic, so runs are reproducible
bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(0xBF58476D1CE4E5B9)
_U_M2 = np.uint64(0x94D049BB133111EB)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_INV53 = np.float64(1.0 / (1 << 53))


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_stream(seed: int, *keys: int) -> int:
    """Derive a stream state from a base seed and an ordered key tuple."""
    state = seed & MASK64
    for k in keys:
        state = mix64(state ^ ((int(k) * GOLDEN + 1) & MASK64))
    return state


def float_key(x: float) -> int:
    """Stable integer key for a float parameter (bit pattern)."""
    return int(np.float64(x).view(np.uint64))


@njit(cache=True, inline="always")
def next_u64(state):
    """Advance a splitmix64 state; returns (new_state, output word)."""
    state = state + _U_GOLDEN
    z = state
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    z = z ^ (z >> _U31)
    return state, z


@njit(cache=True, inline="always")
def next_float(state):
    """Uniform double in [0, 1) with 53 random bits."""
    state, z = next_u64(state)
    return state, np.float64(z >> _U11) * _INV53


@njit(cache=True, inline="always")
def next_below(state, n):
    """Uniform integer in [0, n); modulo bias is O(n / 2**64)."""
    state, z = next_u64(state)
    return state, np.int64(z % np.uint64(n))


def stream_array(seed: int, *keys: int) -> np.ndarray:
    """One-element uint64 array holding a derived stream state.

    Kernels take the state by array so the advanced state survives the call.
    """
    return np.array([derive_stream(seed, *keys)], dtype=np.uint64)
