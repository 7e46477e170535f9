"""Seeded, platform-independent random streams and hashing."""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit child seed from a master seed and arbitrary keys."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & _MASK).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(repr(k).encode())
    return int.from_bytes(h.digest(), "little") >> 1


def tiebreak_keys(seed: int, ids: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 of ``seed ^ id`` used for queue tie-breaks."""
    with np.errstate(over="ignore"):
        x = np.asarray(ids, dtype=np.uint64) ^ np.uint64(splitmix64(seed))
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return x


class SeededStream:
    """Uniform and standard-normal draws from one seeded PCG64 stream.

    Normals use the inverse CDF of the uniform stream so the sequence is
    identical on every platform.  Draws are buffered in chunks.
    """

    def __init__(self, seed: int, chunk: int = 65536):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self._chunk = chunk
        self._normals: list[float] = []
        self._ni = 0

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def normal(self) -> float:
        if self._ni >= len(self._normals):
            u = self._gen.random(self._chunk)
            np.clip(u, 1e-300, 1.0 - 1e-16, out=u)
            self._normals = ndtri(u).tolist()
            self._ni = 0
        z = self._normals[self._ni]
        self._ni += 1
        return z

    def child(self, *keys) -> "SeededStream":
        return SeededStream(derive_seed(self.seed, *keys), self._chunk)
