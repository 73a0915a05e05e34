"""Deterministic, splittable random streams.

Every source of randomness in the package draws from a named stream derived
from (seed, labels) via a keyed hash feeding a Philox counter-based generator,
so independent components never share or race a global RNG state and identical
(seed, labels) always reproduce the same draws, on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest(seed: int, labels: tuple) -> bytes:
    payload = repr((int(seed),) + labels).encode("utf-8")
    return hashlib.blake2b(payload, digest_size=16).digest()


def stream(seed: int, *labels: int | str) -> np.random.Generator:
    """Return an independent generator for the given seed and stream labels."""
    key = int.from_bytes(_digest(seed, labels), "little")
    return np.random.Generator(np.random.Philox(key=key))


def stable_hash(seed: int, *values: int | str) -> int:
    """Deterministic 64-bit hash of (seed, values), stable across processes."""
    payload = repr((int(seed),) + values).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], scale: float) -> np.ndarray:
    """Uniform(-scale, scale) initialization as float64."""
    return rng.uniform(-scale, scale, size=shape).astype(np.float64)
