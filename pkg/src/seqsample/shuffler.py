"""Bounded-memory external shuffle of a store file.

Three passes over the disk:

1. stream the file once and drop each line's header offset into one of
   ``b`` cache files chosen uniformly at random;
2. put the ``b`` cache files in a random order;
3. for each cache in that order, load its offsets, shuffle them in
   memory, and copy the addressed lines from the source into the output.

Only one cache of 8-byte offsets is ever resident, so memory scales with
``N / b`` rather than with the size of the data.
"""

from __future__ import annotations

import math
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import rng as rngmod
from .line_store import (
    NEWLINE,
    TERMINATOR,
    ByteAddressedFile,
    StoreError,
    find_terminator,
    iter_chunks,
    open_store,
)

INDEX_DTYPE = np.dtype("<u8")
INDEX_WIDTH = INDEX_DTYPE.itemsize
DEFAULT_MEMORY_BUDGET = 64 * 1024 * 1024
# headroom over N/b so binomial fluctuation in cache sizes stays in budget
LOAD_FACTOR = 1.25


@dataclass
class ShuffleConfig:
    b: Optional[int] = None
    temp_dir: Optional[Path] = None
    seed: int = 0
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    keep_tmp: bool = False

    def __post_init__(self):
        if self.b is not None and self.b < 1:
            raise ValueError("cache count b must be >= 1")
        if self.memory_budget < INDEX_WIDTH:
            raise ValueError("memory budget smaller than one index entry")

    def resolve_b(self, n_records: int) -> int:
        if self.b is not None:
            expected = math.ceil(n_records / self.b) * INDEX_WIDTH
            if expected > self.memory_budget:
                raise ValueError(
                    f"b={self.b} gives ~{expected} bytes per cache, over the "
                    f"{self.memory_budget}-byte budget"
                )
            return self.b
        return default_cache_count(n_records, self.memory_budget)


def default_cache_count(n_records: int, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> int:
    return max(1, math.ceil(LOAD_FACTOR * INDEX_WIDTH * n_records / memory_budget))


@dataclass
class IndexCache:
    path: Path
    count: int = 0

    def load(self) -> np.ndarray:
        return np.fromfile(self.path, dtype=INDEX_DTYPE).astype(np.int64)


@dataclass
class ShuffleStats:
    n_records: int = 0
    b: int = 0
    peak_index_entries: int = 0
    cache_sizes: List[int] = field(default_factory=list)

    @property
    def peak_index_bytes(self) -> int:
        return self.peak_index_entries * INDEX_WIDTH


def partition_offsets(F: ByteAddressedFile, b: int, temp_dir, rng: np.random.Generator) -> List[IndexCache]:
    """Step 1: stream F and assign each header offset to a random cache."""
    temp_dir = Path(temp_dir)
    caches = [IndexCache(temp_dir / f"cache_{i}.idx") for i in range(b)]
    handles = [open(c.path, "wb") for c in caches]
    try:
        first = True
        for pos, chunk in iter_chunks(F):
            t = np.flatnonzero(np.frombuffer(chunk, dtype=np.uint8) == NEWLINE)
            heads = t.astype(np.int64) + (pos + 1)
            if pos + len(chunk) >= F.n_f:
                heads = heads[:-1]  # n_f itself is not a header
            if first:
                heads = np.concatenate([np.zeros(1, dtype=np.int64), heads])
                first = False
            if heads.size == 0:
                continue
            which = rng.integers(0, b, size=heads.size)
            order = np.argsort(which, kind="stable")
            bounds = np.searchsorted(which[order], np.arange(b + 1))
            sorted_heads = heads[order].astype(INDEX_DTYPE)
            for i in range(b):
                lo, hi = bounds[i], bounds[i + 1]
                if hi > lo:
                    handles[i].write(sorted_heads[lo:hi].tobytes())
                    caches[i].count += int(hi - lo)
    finally:
        for h in handles:
            h.close()
    return caches


def fisher_yates(items: list, rng: np.random.Generator) -> list:
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def permute_caches(caches: List[IndexCache], rng: np.random.Generator) -> List[IndexCache]:
    """Step 2: uniformly random order of the cache files."""
    return fisher_yates(caches, rng)


def _read_line_at(F: ByteAddressedFile, offset: int) -> bytes:
    """Raw bytes of the line at ``offset`` including its terminator."""
    if offset < 0 or offset >= F.n_f:
        raise StoreError(f"cache offset {offset} outside the store")
    start = offset - 1 if offset > 0 else 0
    probe = F.pread(start, F.probe_size)
    if offset > 0:
        if probe[:1] != TERMINATOR:
            raise StoreError(f"cache offset {offset} is not a line header")
        probe = probe[1:]
    idx = probe.find(TERMINATOR)
    if idx >= 0:
        return probe[: idx + 1]
    t = find_terminator(F, offset + len(probe), F.probe_size * 2)
    return F.pread(offset, t + 1 - offset)


def materialize(F: ByteAddressedFile, ordered: List[IndexCache], output_path,
                rng: np.random.Generator, stats: Optional[ShuffleStats] = None) -> ByteAddressedFile:
    """Step 3: write F* by addressing F through each shuffled cache in turn."""
    stats = stats if stats is not None else ShuffleStats()
    with open(output_path, "wb", buffering=F.buffer_size) as out:
        for cache in ordered:
            offsets = cache.load()
            stats.peak_index_entries = max(stats.peak_index_entries, offsets.size)
            rng.shuffle(offsets)
            for off in offsets.tolist():
                out.write(_read_line_at(F, off))
            del offsets
    return open_store(output_path, buffer_size=F.buffer_size, probe_size=F.probe_size)


def shuffle(F, config: ShuffleConfig, output_path, stats: Optional[ShuffleStats] = None) -> ByteAddressedFile:
    """Shuffle store ``F`` into ``output_path``; returns a handle on F*.

    ``F`` may be a path or an open handle.  Cache files ``cache_{i}.idx``
    live in ``config.temp_dir`` (a fresh temporary directory when unset)
    and are removed afterwards unless ``config.keep_tmp``.
    """
    own = not isinstance(F, ByteAddressedFile)
    if own:
        F = open_store(F)
    stats = stats if stats is not None else ShuffleStats()
    made_tmp = config.temp_dir is None
    temp_dir = Path(tempfile.mkdtemp(prefix="seqsample-shuffle-")) if made_tmp else Path(config.temp_dir)
    temp_dir.mkdir(parents=True, exist_ok=True)
    caches: List[IndexCache] = []
    try:
        n = F.n_records
        b = config.resolve_b(n)
        stats.n_records, stats.b = n, b
        caches = partition_offsets(F, b, temp_dir, rngmod.stream(config.seed, rngmod.SHUFFLE_ASSIGN))
        stats.cache_sizes = [c.count for c in caches]
        ordered = permute_caches(caches, rngmod.stream(config.seed, rngmod.SHUFFLE_PERMUTE))
        result = materialize(F, ordered, output_path,
                             rngmod.stream(config.seed, rngmod.SHUFFLE_WITHIN), stats)
    finally:
        if own:
            F.close()
        if not config.keep_tmp:
            for c in caches:
                c.path.unlink(missing_ok=True)
            if made_tmp:
                shutil.rmtree(temp_dir, ignore_errors=True)
    return result
