"""Seedable, splittable random streams.

Every random draw in baxlab goes through a :class:`numpy.random.Generator`
derived from a ``(seed, stream_id)`` pair, so any sample can be reproduced
from those two numbers alone.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _stream_key(stream_id) -> int:
    if isinstance(stream_id, (int, np.integer)):
        return int(stream_id)
    digest = hashlib.sha256(str(stream_id).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int | None = 0, stream_id=0) -> np.random.Generator:
    """Return the generator for stream ``stream_id`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_stream_key(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def spawn(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``count`` independent child generators."""
    return rng.spawn(count)


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an int seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(rng)
