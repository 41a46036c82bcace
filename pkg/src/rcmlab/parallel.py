"""Replication runner with per-replication random streams.

Replication ``k`` of a task labelled ``label`` always draws from the same
stream, so results do not depend on how replications are spread over workers.
"""
from __future__ import annotations

import multiprocessing as mp
import zlib
from typing import Callable

from .rng import RngStream


def stream_for(seed: int, label: str, k: int) -> RngStream:
    return RngStream(seed, (zlib.crc32(label.encode()) << 32) + k)


def _run_chunk(args):
    task, seed, label, lo, hi = args
    return [task(k, stream_for(seed, label, k)) for k in range(lo, hi)]


def run_replications(task: Callable, n_reps: int, seed: int, label: str, workers: int = 1) -> list:
    """``[task(k, stream_k) for k in range(n_reps)]``, optionally over a process pool.

    The index range is cut into one contiguous block per worker and the blocks are
    concatenated in order.
    """
    if n_reps <= 0:
        return []
    workers = max(1, min(int(workers), n_reps))
    if workers == 1:
        return _run_chunk((task, seed, label, 0, n_reps))
    edges = [n_reps * w // workers for w in range(workers + 1)]
    jobs = [(task, seed, label, edges[w], edges[w + 1]) for w in range(workers)]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    with ctx.Pool(workers) as pool:
        parts = pool.map(_run_chunk, jobs)
    return [r for part in parts for r in part]
