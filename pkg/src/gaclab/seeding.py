"""Named random substreams derived from one root seed.

Splitting rule: the stream called ``name`` is
``PCG64(SeedSequence(entropy=root, spawn_key=(crc32(name),)))``. Each stream
depends only on (root, name), so adding a new consumer never shifts the
draws seen by existing ones.
"""

from __future__ import annotations

import zlib
from typing import Iterable

import numpy as np

STREAMS = ("env", "init", "latent", "uniform_ref", "buffer_sample", "exploration", "eval")


def stream(root_seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=root_seed, spawn_key=(key,))))


def seed_streams(root_seed: int, names: Iterable[str] = STREAMS) -> dict[str, np.random.Generator]:
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    return {name: stream(root_seed, name) for name in names}
