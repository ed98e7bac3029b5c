"""Seedable, stream-splittable random generators.

A generator is identified by ``(seed, stream)``; streams may be integers or
names. Every consumer draws from its own stream so adding a consumer never
perturbs another one's draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_id(stream) -> int:
    if isinstance(stream, (int, np.integer)):
        return int(stream)
    return zlib.crc32(str(stream).encode("utf-8"))


def make_rng(seed: int, *streams) -> np.random.Generator:
    key = tuple(stream_id(s) for s in streams)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
