"""Counter-based seed derivation.

Every random quantity is keyed by ``(master_seed, stream, index)`` so that a
replicate's draws do not depend on how work is split across workers.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

WORKERS_ENV = "ARGSYM_WORKERS"


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derived_rng(master_seed: int, stream: str, *index: int) -> np.random.Generator:
    """Generator for one replicate (or one auxiliary task) of an experiment."""
    if master_seed is None:
        raise ValueError("an explicit master seed is required")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(stream_id(stream), *map(int, index)))
    return np.random.default_rng(ss)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def map_ordered(func: Callable[[int], T], keys: Sequence[int], workers: int | None = None) -> list[T]:
    """Apply ``func`` to ``keys`` and return results in key order.

    Threads are used because the heavy lifting happens inside numpy, which
    releases the GIL; results never depend on the worker count.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(keys) <= 1:
        return [func(k) for k in keys]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, keys))


def chunks(start: int, stop: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, stop)) for a in range(start, stop, size)]
