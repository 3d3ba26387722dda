"""Reproducible random streams.

Every random draw descends from a master seed through a named stream
``(seed, trial, label)``. Streams are numpy ``Philox`` generators, which are
counter based, so deriving a stream never depends on how many draws other
streams have made. Kernels get a 64-bit key from their stream and expand it
with :func:`uniforms`, a SplitMix64 counter hash shared bit-for-bit by the
compiled and pure-Python kernels.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & MASK64
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by ``labels`` under master ``seed``."""
    words = [int(seed) & MASK64] + [_label_word(x) for x in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def child(rng: np.random.Generator, *labels) -> np.random.Generator:
    """Derive a named sub-stream from ``rng`` (consumes one draw of ``rng``)."""
    return stream(int(rng.integers(0, 1 << 63)), *labels)


def kernel_key(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 1 << 63, dtype=np.int64))


def splitmix(key: int, counter: int) -> int:
    z = (key + (counter + 1) * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform in [0, 1) of the stream ``key``."""
    return (splitmix(key, counter) >> 11) * (1.0 / 9007199254740992.0)


def uniforms(keys, counters) -> np.ndarray:
    """Vectorised :func:`uniform` over arrays of keys and counters."""
    k = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = k + (c + np.uint64(1)) * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
