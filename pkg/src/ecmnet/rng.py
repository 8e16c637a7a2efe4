"""Deterministic, portable random numbers (splitmix64).

Everything random in this package (profile synthesis, weight init,
measurement noise, epoch shuffling) draws from one small generator so
runs are reproducible from integer seeds alone, independent of numpy's
RNG internals.

The generator is splitmix64. Output k (0-based) of the stream with seed
s is ``mix64((s + (k+1) * GOLDEN) mod 2**64)`` where::

    GOLDEN = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31

All arithmetic is modulo 2**64. Because the state is an affine function
of the output index, whole streams are generated with vectorized uint64
math instead of a sequential loop.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a python int, modulo 2**64."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def derive(seed: int, index: int) -> int:
    """Derive a child seed: output `index` of the stream seeded `seed`."""
    return mix64((seed + ((index + 1) * GOLDEN)) & _MASK)


def uint64_stream(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Outputs offset..offset+n-1 of the stream, as a uint64 array."""
    if n < 0:
        raise ValueError(f"stream length must be >= 0, got {n}")
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def uniforms(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """n doubles uniform in [0, 1): the top 53 bits of each output."""
    bits = uint64_stream(seed, n, offset) >> np.uint64(11)
    return bits.astype(np.float64) * (2.0 ** -53)


def normals(seed: int, n: int) -> np.ndarray:
    """n standard normal doubles via Box-Muller on stream pairs."""
    m = (n + 1) // 2
    u = uniforms(seed, 2 * m)
    # u1 shifted into (0, 1] so log() stays finite
    u1 = u[:m] + 2.0 ** -54
    u2 = u[m:]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n]


def permutation(seed: int, n: int) -> np.ndarray:
    """Deterministic permutation of range(n): stable argsort of 64-bit keys."""
    keys = uint64_stream(seed, n)
    return np.argsort(keys, kind="stable")
