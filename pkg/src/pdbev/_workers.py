"""Chunked thread fan-out for voxel-parallel kernels.

numpy releases the GIL inside its kernels, so threads give real speedups.
Each chunk owns a disjoint output slice, which keeps results bit-identical
regardless of the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError

ENV_THREADS = "PDBEV_THREADS"
CHUNK = 1 << 15


def resolve_threads(threads=None) -> int:
    """Worker count: explicit value, else ``$PDBEV_THREADS``, else 1."""
    field = "--threads"
    if threads is None:
        threads = os.environ.get(ENV_THREADS) or 1
        field = ENV_THREADS
    try:
        n = int(threads)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a positive integer, got {threads!r}") from None
    if n < 1:
        raise ConfigError(field, f"expected a positive integer, got {n}")
    return n


def for_chunks(fn, n: int, threads=None, chunk: int = CHUNK) -> None:
    """Call ``fn(start, stop)`` over ``[0, n)`` in chunks."""
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    workers = min(resolve_threads(threads), len(bounds))
    if workers <= 1:
        for s, e in bounds:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, s, e) for s, e in bounds]:
            fut.result()
