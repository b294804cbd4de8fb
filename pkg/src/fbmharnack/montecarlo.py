"""Block-parallel path simulation with order-independent aggregation.

Paths are split into fixed-size blocks of consecutive path indices.  Each
block is simulated from its own counter-based streams, so the per-path
values are the same whatever the number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np

from .errors import ContractError

__all__ = ["BLOCK_SIZE", "blocks", "run_blocks", "mean_se"]

BLOCK_SIZE = 2048


def blocks(n_paths, block_size=BLOCK_SIZE):
    """``[(start, stop), ...]`` covering ``range(n_paths)``."""
    if n_paths < 1:
        raise ContractError(f"n_paths must be positive, got {n_paths}")
    return [(a, min(a + block_size, n_paths)) for a in range(0, n_paths, block_size)]


def run_blocks(fn, n_paths, workers=1, block_size=BLOCK_SIZE):
    """Apply ``fn(path_indices) -> dict of per-path arrays`` over all blocks.

    Results are concatenated in path order.
    """
    parts = [np.arange(a, b, dtype=np.int64) for a, b in blocks(n_paths, block_size)]
    if workers and workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            outs = list(pool.map(fn, parts))
    else:
        outs = [fn(p) for p in parts]
    return {k: np.concatenate([o[k] for o in outs]) for k in outs[0]}


def mean_se(values):
    """Sample mean and its standard error, with compensated summation."""
    v = np.asarray(values, dtype=float).ravel()
    m = v.size
    mean = math.fsum(v) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (m - 1)
    return mean, math.sqrt(var / m)
