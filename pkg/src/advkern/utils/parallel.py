"""
advkern Work Pool.

Independent tasks (replicates, grid cells) run on a thread pool. Each task
receives its own seed spawned from the run seed, and results come back in
task order so assembly is deterministic whatever the thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Independent integer seeds for count tasks derived from one run seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def ordered_map(fn: Callable[[T], R], tasks: Sequence[T], threads: int = 1) -> List[R]:
    """Apply fn to every task, in parallel when threads > 1, keeping task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
