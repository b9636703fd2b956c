"""Counter-derived random streams and deterministic replica blocking.

Replicas are grouped in fixed-size blocks. Block ``b`` of purpose ``p``
draws from ``Philox(SeedSequence(seed, spawn_key=(tag(p), b)))``, so results
depend only on ``(seed, purpose, block)`` and never on the thread count.
Partial results are merged in block order.
"""
from __future__ import annotations

import os
import secrets
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 256
THREADS_ENV = "CBELAB_THREADS"

T = TypeVar("T")


def purpose_tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def new_seed() -> int:
    """Fresh 63-bit seed for runs that did not specify one."""
    return secrets.randbits(63)


def stream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    """Generator for ``(seed, purpose, *key)``; independent across distinct keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_tag(purpose), *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def blocks(replicas: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """``(block_index, size)`` pairs covering ``replicas`` items."""
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    out = []
    b = 0
    left = int(replicas)
    while left > 0:
        n = min(block_size, left)
        out.append((b, n))
        left -= n
        b += 1
    return out


def map_blocks(fn: Callable[[int, int], T], replicas: int, threads: int | None = None,
               block_size: int = BLOCK_SIZE) -> list[T]:
    """Evaluate ``fn(block_index, size)`` over all blocks, results in block order."""
    todo = blocks(replicas, block_size)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(todo) == 1:
        return [fn(b, n) for b, n in todo]
    with ThreadPoolExecutor(max_workers=min(threads, len(todo))) as ex:
        futs = [ex.submit(fn, b, n) for b, n in todo]
        return [f.result() for f in futs]


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(parts), axis=0)
