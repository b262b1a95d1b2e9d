"""Byte-range extraction and the FULL / RANDOM / BATCH workload drivers."""

from __future__ import annotations

import enum
import hashlib
import os
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .archive import ArchiveReader, locate_blocks
from .corpus import as_array
from .errors import CorruptionError, ParameterError, RLZError

DEFAULT_QUERIES = 10_000
DEFAULT_FRAGMENT = 16 * 1024
DROP_CACHE_ENV = "RLZ_ARC_DROP_CACHES"


class AccessMode(enum.Enum):
    FULL = "FULL"
    RANDOM = "RANDOM"
    BATCH = "BATCH"


class _Timer:
    __slots__ = ("fetch", "decode", "decoded")

    def __init__(self):
        self.fetch = 0.0
        self.decode = 0.0
        self.decoded = 0


def get_range(reader: ArchiveReader, start: int, length: int, timer: _Timer | None = None) -> bytes:
    """Return ``corpus[start:start + length]``, decoding only the blocks it touches.

    Blocks are decoded from their first factor; the bytes before ``start``
    are discarded.
    """
    first, last, skip = locate_blocks(reader.header, start, length)
    t0 = time.perf_counter()
    buf = reader.fetch(first, last)
    t1 = time.perf_counter()
    out = np.empty(length, dtype=np.uint8)
    filled = 0
    scratch = np.empty(reader.block_size, dtype=np.uint8)
    decoded = 0
    for i in range(first, last + 1):
        block = reader.decode_payload(i, reader.payload_slice(buf, first, i), scratch)
        decoded += len(block)
        lo = skip if i == first else 0
        take = min(len(block) - lo, length - filled)
        out[filled:filled + take] = block[lo:lo + take]
        filled += take
    if timer is not None:
        timer.fetch += t1 - t0
        timer.decode += time.perf_counter() - t1
        timer.decoded += decoded
    return out.tobytes()


@dataclass(frozen=True)
class Workload:
    mode: AccessMode
    fragment_size: int
    seed: int
    queries: np.ndarray
    source_length: int

    @property
    def query_count(self) -> int:
        return len(self.queries)

    @property
    def sorted(self) -> bool:
        return self.mode is AccessMode.BATCH

    def fragment_length(self, start: int) -> int:
        return min(self.fragment_size, self.source_length - start)


def generate_workload(mode, source_length: int, fragment_size: int = DEFAULT_FRAGMENT,
                      query_count: int = DEFAULT_QUERIES, seed: int = 0) -> Workload:
    """Build a deterministic query set.

    RANDOM draws unaligned starts uniformly from ``[0, |C| - fragment]``;
    BATCH is the same draw sorted by address; FULL enumerates aligned
    fragments in order and ignores ``query_count``.
    """
    mode = AccessMode(mode.upper() if isinstance(mode, str) else mode)
    if fragment_size < 1:
        raise ParameterError("fragment size must be positive")
    if mode is AccessMode.FULL:
        queries = np.arange(0, source_length, fragment_size, dtype=np.int64)
    else:
        if fragment_size > source_length:
            raise ParameterError("fragment larger than the corpus")
        rng = np.random.default_rng(seed)
        queries = rng.integers(0, source_length - fragment_size + 1, size=query_count,
                               dtype=np.int64)
        if mode is AccessMode.BATCH:
            queries = np.sort(queries, kind="stable")
    return Workload(mode, fragment_size, seed, queries, source_length)


@dataclass
class ThroughputReport:
    mode: str
    query_count: int
    fragment_size: int
    seed: int
    queries_sorted: bool
    wall_time: float
    fragments_per_sec: float
    bytes_returned: int
    bytes_decoded: int
    blocks_fetched: int
    fetch_time: float
    decode_time: float
    result_hash: str
    multiset_hash: str
    verified: bool
    cache_dropped: bool
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.to_dict().items())


def drop_caches(hook=None) -> bool:
    """Run the cache-drop hook (a callable or shell command); True when one ran."""
    hook = hook if hook is not None else os.environ.get(DROP_CACHE_ENV)
    if not hook:
        return False
    if callable(hook):
        hook()
    else:
        subprocess.run(hook, shell=True, check=True)
    return True


def _full_scan(reader: ArchiveReader, w: Workload, emit, timer: _Timer):
    # One sequential pass: every block is fetched and decoded exactly once.
    bs = reader.block_size
    cur = -1
    block = None
    scratch = np.empty(bs, dtype=np.uint8)
    for start in w.queries.tolist():
        length = w.fragment_length(start)
        out = np.empty(length, dtype=np.uint8)
        filled = 0
        while filled < length:
            pos = start + filled
            i = pos // bs
            if i != cur:
                t0 = time.perf_counter()
                buf = reader.fetch(i, i)
                t1 = time.perf_counter()
                block = reader.decode_payload(i, buf, scratch)
                timer.fetch += t1 - t0
                timer.decode += time.perf_counter() - t1
                timer.decoded += len(block)
                cur = i
            lo = pos - i * bs
            take = min(len(block) - lo, length - filled)
            out[filled:filled + take] = block[lo:lo + take]
            filled += take
        emit(start, out.tobytes())


def run_workload(reader: ArchiveReader, w: Workload, oracle=None, drop_cache_hook=None,
                 threads: int = 1) -> ThroughputReport:
    """Execute ``w`` against ``reader`` and time it.

    With ``oracle`` (the uncompressed corpus) every fragment is checked and
    the first mismatch aborts with its offset.  ``threads > 1`` splits the
    queries into independent streams.
    """
    if w.source_length != reader.source_length:
        raise ParameterError("workload was generated for a different corpus length")
    ref = as_array(oracle) if oracle is not None else None
    dropped = drop_caches(drop_cache_hook)
    before = reader.counters.blocks_fetched
    # Each fragment is hashed once; the ordered and the sorted digest
    # sequences give the result hash and the order-free multiset hash.
    digests = [None] * w.query_count
    returned = 0
    lock = threading.Lock()

    def check(start, data):
        if ref is not None and data != ref[start:start + len(data)].tobytes():
            raise CorruptionError(f"query at offset {start} returned wrong bytes")

    timers = []
    t_start = time.perf_counter()
    if w.mode is AccessMode.FULL:
        timer = _Timer()
        timers.append(timer)
        k = 0

        def emit(start, data):
            nonlocal k, returned
            check(start, data)
            digests[k] = hashlib.sha1(data).digest()
            returned += len(data)
            k += 1

        _full_scan(reader, w, emit, timer)
    else:
        starts = w.queries.tolist()

        def worker(lo, hi):
            timer = _Timer()
            with lock:
                timers.append(timer)
            results = []
            for k in range(lo, hi):
                start = starts[k]
                try:
                    data = get_range(reader, start, w.fragment_length(start), timer)
                except RLZError as exc:
                    raise type(exc)(f"query at offset {start} failed: {exc}") from exc
                check(start, data)
                results.append(data)
            return lo, results

        if threads <= 1:
            chunks = [worker(0, len(starts))]
        else:
            bounds = np.linspace(0, len(starts), threads + 1).astype(int)
            with ThreadPoolExecutor(threads) as pool:
                chunks = list(pool.map(lambda b: worker(*b), zip(bounds[:-1], bounds[1:])))
        for lo, results in sorted(chunks, key=lambda c: c[0]):
            for j, data in enumerate(results):
                digests[lo + j] = hashlib.sha1(data).digest()
                returned += len(data)
    wall = time.perf_counter() - t_start

    result = hashlib.sha256(b"".join(digests)).hexdigest()
    multiset = hashlib.sha256(b"".join(sorted(digests))).hexdigest()
    return ThroughputReport(
        mode=w.mode.value, query_count=w.query_count, fragment_size=w.fragment_size,
        seed=w.seed, queries_sorted=w.sorted, wall_time=wall,
        fragments_per_sec=w.query_count / wall if wall > 0 else float("inf"),
        bytes_returned=returned, bytes_decoded=sum(t.decoded for t in timers),
        blocks_fetched=reader.counters.blocks_fetched - before,
        fetch_time=sum(t.fetch for t in timers), decode_time=sum(t.decode for t in timers),
        result_hash=result, multiset_hash=multiset, verified=ref is not None,
        cache_dropped=dropped, threads=max(1, threads))
