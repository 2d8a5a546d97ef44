"""Seed handling: every random task gets its own stream keyed by task index.

Streams are derived as children of a ``SeedSequence`` with an extended
spawn key, so a task's draws depend only on (seed, key) and never on which
worker runs it or how many workers there are.
"""

from __future__ import annotations

import zlib

import numpy as np

Seed = int | np.random.SeedSequence


def as_seed_sequence(seed: Seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _key_part(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def child(seed: Seed, *key: int | str) -> np.random.SeedSequence:
    """Deterministic sub-stream of ``seed`` addressed by ``key``."""
    parent = as_seed_sequence(seed)
    return np.random.SeedSequence(
        parent.entropy, spawn_key=tuple(parent.spawn_key) + tuple(_key_part(k) for k in key)
    )


def rng_for(seed: Seed, *key: int | str) -> np.random.Generator:
    return np.random.default_rng(child(seed, *key))
