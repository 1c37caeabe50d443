"""Seed derivation and keyed hashing.

All stochastic code draws from numpy's PCG64 generator. Sub-tasks get their
own child seed derived from (seed, tag, index) through ``SeedSequence`` so
results do not depend on the order in which sub-tasks run.

Deterministic "random" selections (waypoints, parents) use a keyed 64-bit
splitmix-style mix instead of a generator, so every node computing the same
table from the same topology and key gets the same answer.
"""
from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def child_seed(seed: int, tag: str, index: int = 0) -> int:
    """Derive an independent 64-bit seed for sub-task ``(tag, index)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int, tag: str | None = None, index: int = 0) -> np.random.Generator:
    if tag is None:
        return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(child_seed(seed, tag, index))


def _mix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def keyed_hash(key: int, *parts) -> np.ndarray:
    """Vectorised 64-bit hash of ``(key, *parts)``; parts broadcast like numpy arrays."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(int(key) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
        for part in parts:
            h = _mix(h ^ np.asarray(part).astype(np.uint64))
    return h
