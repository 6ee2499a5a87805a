"""Deterministic random number generation for reproducible experiments.

Everything that consumes randomness in this package (fold shuffles,
weight init, dropout masks, bootstrap resampling) draws from the
splitmix64 generator defined here. Splitmix64 is counter-based: the
i-th output of a stream seeded with ``s`` is ``mix64(s + i * GOLDEN)``,
which makes the exact same stream reproducible in any language and lets
us generate blocks of outputs with vectorized integer arithmetic.

Conventions fixed by this module (and relied on by the tests):

* uniform doubles use the top 53 bits: ``u = (x >> 11) * 2**-53``
* bounded ints are ``floor(u * n)``
* permutations are Fisher-Yates from the back, one bounded draw per swap
* stream derivation combines a base seed with an FNV-1a hash of a label
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """Finalizer of splitmix64; a 64-bit bijective scrambler."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base_seed: int, label: str | int) -> int:
    """Derive an independent stream seed from (base seed, label).

    Labels are hashed with 64-bit FNV-1a so distinct run labels
    ("fold0", "dropout", resample indices, ...) get distinct streams.
    """
    h = _FNV_OFFSET
    for byte in str(label).encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return mix64((base_seed & _MASK64) ^ h)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix_u64_array(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset+1 .. offset+n`` of the stream seeded with ``seed``.

    Identical to calling :meth:`SplitMix64.next_u64` that many times.
    """
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    base = np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN)
    return _mix64_array(base)


def splitmix_uniform_array(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Vectorized 53-bit uniforms in [0, 1), stream-consistent with scalars."""
    bits = splitmix_u64_array(seed, n, offset)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def splitmix_uniform_matrix(seeds: np.ndarray, n: int) -> np.ndarray:
    """Row r holds the first n uniforms of the stream seeded with seeds[r].

    Lets many independent streams (e.g. one per bootstrap resample) be
    generated in one vectorized pass.
    """
    s = np.asarray(seeds, dtype=np.uint64)
    idx = np.arange(1, n + 1, dtype=np.uint64)
    bits = _mix64_array(s[:, None] + idx[None, :] * np.uint64(_GOLDEN))
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


class SplitMix64:
    """Sequential splitmix64 stream with the helpers the harness needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._count = 0

    @property
    def count(self) -> int:
        """Number of 64-bit outputs consumed so far."""
        return self._count

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        self._count += 1
        return mix64(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Uniform int in [0, n)."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return min(int(self.uniform() * n), n - 1)

    def uniform_array(self, n: int) -> np.ndarray:
        """Block of n uniforms, identical to n sequential uniform() calls."""
        out = splitmix_uniform_array(self._state, n)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        self._count += n
        return out

    def uniform_signed(self, scale: float) -> float:
        """Uniform double in [-scale, +scale)."""
        return (self.uniform() * 2.0 - 1.0) * scale

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def shuffled(self, items: list) -> list:
        """New list with items reordered by a fresh permutation."""
        return [items[i] for i in self.permutation(len(items))]
