"""Counter-based random streams.

Every draw comes from a Philox generator keyed by ``(seed, purpose, block)``
through :class:`numpy.random.SeedSequence`.  Replications are cut into
fixed-size blocks, so the numbers a replication sees do not depend on how
many threads run or in which order blocks are processed.
"""
from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

BLOCK = 4096


def _tag(purpose: str) -> int:
    return int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:4], "little")


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, purpose, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag(purpose),) + tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, block: int = BLOCK) -> Iterator[tuple[int, slice]]:
    """``(block_index, slice)`` pairs covering ``range(n)``."""
    for b, start in enumerate(range(0, n, block)):
        yield b, slice(start, min(start + block, n))


def derive_seed(seed: int, purpose: str, *keys: int) -> int:
    """A 63-bit child seed, handy for handing to sub-experiments."""
    return int(stream(seed, "derive:" + purpose, *keys).integers(0, 2**63 - 1))
