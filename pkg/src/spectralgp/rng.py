"""Counter-based keyed random streams.

A stream is identified by ``(seed, tag, index)``. Each key seeds its own
Philox generator, so a draw never depends on how many other draws were made
before it or in which order cells of an experiment run. Gaussians come from
Box-Muller applied to the uniform stream, which keeps prefixes stable: the
first ``k`` normals of a stream are the same whether ``k`` or ``10 * k`` are
requested.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, tag: str, index: int) -> list[int]:
    seed = int(seed) & _MASK64
    return [seed & 0xFFFFFFFF, seed >> 32, zlib.crc32(tag.encode("utf-8")), int(index) & _MASK64]


def generator(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(seed, tag, index))))


def uniform(seed: int, tag: str, index: int = 0, size=None) -> np.ndarray:
    return generator(seed, tag, index).random(size)


def standard_normal(seed: int, tag: str, index: int = 0, size=()) -> np.ndarray:
    """Standard normal draws via Box-Muller on the keyed uniform stream."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    pairs = (count + 1) // 2
    u = generator(seed, tag, index).random(2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1]
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(2.0 * np.pi * u2)
    z[1::2] = radius * np.sin(2.0 * np.pi * u2)
    return z[:count].reshape(shape)


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    """A 63-bit integer seed for libraries that want a plain integer."""
    return int(generator(seed, tag, index).integers(0, 2**63 - 1))
