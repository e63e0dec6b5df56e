"""Small shared helpers: seeded substreams, checksums, chunked row work."""

import hashlib
import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Row chunks have a fixed size so results never depend on the worker count.
CHUNK_ROWS = 256


def substream(seed, name):
    """Independent generator for component `name` derived from one seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def sha256_file(path, blocksize=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(blocksize), b""):
            h.update(block)
    return h.hexdigest()


def default_threads():
    return os.cpu_count() or 1


def chunked_rows(fn, n_rows, threads=1, chunk=CHUNK_ROWS):
    """Apply fn(start, stop) over fixed row chunks; results come back in order."""
    bounds = [(s, min(s + chunk, n_rows)) for s in range(0, n_rows, chunk)]
    if threads is None:
        threads = default_threads()
    if threads <= 1 or len(bounds) <= 1:
        return [fn(s, e) for s, e in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
