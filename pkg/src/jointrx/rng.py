"""Deterministic counter-based random streams.

Every random draw in this library is addressed by a 64-bit key and a
counter, so substreams never overlap, can be generated out of order, and
reproduce bit-for-bit on any platform.  The generator is SplitMix64 used
in counter mode:

    word(key, i) = mix64((key + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64)

where ``mix64`` is the SplitMix64 finalizer.  Keys for substreams are
derived by folding integer or string tags into the master seed with
``derive_key`` (strings are reduced to 64 bits with BLAKE2b first).
Uniforms take the top 53 bits of a word; Gaussians come from the
Box-Muller transform applied to consecutive uniform pairs.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_FOLD = 0xD1342543DE82EF95


def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, *tags: int | str) -> int:
    """Fold ``tags`` (ints or strings) into ``seed``, returning a 64-bit key."""
    state = _mix64_int((int(seed) & MASK64) ^ _GOLDEN)
    for tag in tags:
        if isinstance(tag, str):
            digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
            tag = int.from_bytes(digest, "big")
        state = _mix64_int(((state ^ (int(tag) & MASK64)) * _FOLD) & MASK64)
    return state


def word(key: int, counter: int) -> int:
    """Single raw 64-bit output at position ``counter`` of stream ``key``."""
    return _mix64_int((int(key) + (counter + 1) * _GOLDEN) & MASK64)


def words(key: int, n: int, start: int = 0) -> np.ndarray:
    """Raw 64-bit outputs at positions start .. start+n-1 (vectorized)."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    z = idx * np.uint64(_GOLDEN) + np.uint64(int(key) & MASK64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, n: int, start: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1), one per counter position."""
    w = words(key, n, start)
    return (w >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normals(key: int, n: int) -> np.ndarray:
    """Standard Gaussians via Box-Muller on uniform pairs (2i, 2i+1)."""
    pairs = (n + 1) // 2
    w = words(key, 2 * pairs)
    # u1 in (0, 1] so the log is finite; u2 in [0, 1).
    u1 = ((w[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(theta)
    out[1::2] = radius * np.sin(theta)
    return out[:n]


def bits(key: int, n: int) -> np.ndarray:
    """n random bits (uint8), one word consumed per bit."""
    return (words(key, n) >> np.uint64(63)).astype(np.uint8)


def permutation(key: int, n: int) -> np.ndarray:
    """Fisher-Yates permutation of range(n) with rejection sampling."""
    perm = np.arange(n)
    counter = 0
    for i in range(n - 1, 0, -1):
        bound = i + 1
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            w = word(key, counter)
            counter += 1
            if w < limit:
                break
        j = w % bound
        perm[i], perm[j] = perm[j], perm[i]
    return perm
