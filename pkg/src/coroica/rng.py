"""Seeded random streams.

All randomness goes through numpy's counter-based Philox generator. A stream
is identified by a 64-bit seed plus a tuple of names/integers, so that
substreams for different purposes (or bench cells) never overlap and do not
depend on call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Generator for ``seed`` restricted to the substream named by ``stream``."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_key(p) for p in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream) -> int:
    """Deterministic 64-bit child seed for ``stream``."""
    seed = int(seed)
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_key(p) for p in stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
