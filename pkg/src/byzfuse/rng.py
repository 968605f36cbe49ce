"""Counter-based random streams and block-parallel trial execution.

Every Monte-Carlo block b of a run with master seed s draws from
Philox(SeedSequence(s, spawn_key=(stream, b))).  The block partition depends
only on the trial count and the block size, never on the worker count, so
estimates are bit-identical for any degree of parallelism.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_BLOCK = 2000
THREADS_ENV = "BYZFUSE_THREADS"


def make_rng(seed=None):
    """Generator from an int, SeedSequence or existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def block_rng(master_seed, block, stream=0):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def trial_rng(master_seed, trial, stream=0):
    """Stream for a single trial (used by the scalar, per-trial drivers)."""
    return block_rng(master_seed, trial, stream=stream + (1 << 20))


def split_blocks(trials, block_size=DEFAULT_BLOCK):
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bs = max(1, int(block_size))
    out = []
    start = 0
    b = 0
    while start < trials:
        size = min(bs, trials - start)
        out.append((b, size))
        start += size
        b += 1
    return out


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def map_blocks(fn, trials, master_seed, block_size=DEFAULT_BLOCK, threads=None, stream=0):
    """Run fn(rng, size, block_index) for every block; results in block order."""
    blocks = split_blocks(trials, block_size)
    threads = resolve_threads(threads)

    def job(item):
        b, size = item
        return fn(block_rng(master_seed, b, stream), size, b)

    if threads == 1 or len(blocks) == 1:
        return [job(item) for item in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(job, blocks))


def sum_blocks(fn, trials, master_seed, block_size=DEFAULT_BLOCK, threads=None, stream=0):
    """Integer-count reduction over blocks.  Summation order is fixed."""
    parts = map_blocks(fn, trials, master_seed, block_size, threads, stream)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total
