"""Seed derivation: every stochastic stage draws from (root seed, stage tags)."""

import zlib
from typing import Union

import numpy as np

Tag = Union[str, int]


def _tag_to_int(tag: Tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_seed(root: int, *tags: Tag) -> int:
    """Deterministic 63-bit seed for the stream named by ``tags`` under ``root``."""
    sequence = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_tag_to_int(t) for t in tags))
    return int(sequence.generate_state(1, dtype=np.uint64)[0]) >> 1


def make_rng(root: int, *tags: Tag) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *tags))
