"""Seeded random streams.

Every consumer (medium generation, frame simulation, optimizer partitions,
noise) draws from its own stream derived from ``(master_seed, tag)``. Streams
are PCG64 generators seeded through ``numpy.random.SeedSequence`` with the tag
hashed into the spawn key, so adding a new consumer never shifts the draws of
an existing one.

Uniform deviates used for anything that is persisted to disk (random media)
come from :func:`portable_uniform`, which converts raw 64-bit PCG64 output to
doubles with a fixed 53-bit recipe. That path does not depend on numpy's
distribution code and is reproducible bit for bit across platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

PRNG_ID = "numpy-PCG64/SeedSequence(master_seed, spawn_key=(crc32(tag),))/u53-v1"

_U53 = 1.0 / 9007199254740992.0  # 2**-53


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def stream(master_seed: int, tag: str) -> np.random.Generator:
    """Independent generator for one purpose tag."""
    if master_seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(tag_key(tag),))
    return np.random.Generator(np.random.PCG64(ss))


def portable_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform doubles in [0, 1) built from raw PCG64 words (top 53 bits)."""
    n = int(np.prod(size)) if np.ndim(size) else int(size)
    raw = gen.bit_generator.random_raw(n)
    out = (raw >> np.uint64(11)).astype(np.float64) * _U53
    return out.reshape(size)
