"""Sampled dictionary construction and longest-prefix-match search.

The dictionary is a concatenation of fixed-length samples taken at a
regular stride across the corpus.  Matching uses a suffix array over the
dictionary; ties between equally long matches resolve to the smallest
dictionary offset, found with a two-level range-minimum table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from pydivsufsort import divsufsort, kasai

from .corpus import as_array
from .errors import ParameterError

# Suffix-array entries per range-minimum bucket.
RMQ_BUCKET = 32
# Neighbours scanned through the LCP array before falling back to binary search.
SCAN_LIMIT = 48
# Suffix prefix bytes packed into one comparison key.
KEY_BYTES = 8


@dataclass(frozen=True)
class Dictionary:
    data: bytes
    sample_size: int
    source_length: int
    sample_interval: int

    def __len__(self):
        return len(self.data)

    @property
    def array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8)

    @property
    def sample_count(self) -> int:
        return len(self.data) // self.sample_size if self.sample_size else 0

    def sample_source_offset(self, i: int) -> int:
        """Corpus offset that sample ``i`` was copied from."""
        return i * self.sample_interval


def sampling_plan(source_length: int, dict_size: int, sample_size: int) -> tuple[int, int]:
    """Return ``(sample count, sampling interval)`` for a dictionary.

    The interval never drops below the sample size, so samples of a short
    corpus tile it from the start instead of overlapping.
    """
    if sample_size <= 0 or dict_size <= 0:
        raise ParameterError("dictionary and sample sizes must be positive")
    if dict_size % sample_size:
        raise ParameterError(
            f"dict_size {dict_size} is not a multiple of sample_size {sample_size}")
    count = dict_size // sample_size
    return count, max(source_length // count, sample_size)


def build_dictionary(corpus, dict_size: int, sample_size: int) -> Dictionary:
    """Concatenate ``dict_size // sample_size`` evenly spaced corpus samples.

    Samples ignore document boundaries.  When the corpus is shorter than
    the requested dictionary the stride collapses to ``sample_size`` and
    the tail is zero-padded.
    """
    src = as_array(corpus)
    n = len(src)
    count, interval = sampling_plan(n, dict_size, sample_size)
    if dict_size > n:
        warnings.warn(f"dictionary size {dict_size} exceeds corpus length {n}; "
                      "dictionary is the zero-padded corpus", stacklevel=2)

    out = np.zeros(dict_size, dtype=np.uint8)
    for i in range(count):
        start = i * interval
        if start >= n:
            break
        piece = src[start:start + sample_size]
        out[i * sample_size:i * sample_size + len(piece)] = piece
    return Dictionary(out.tobytes(), sample_size, n, interval)


@dataclass(frozen=True)
class DictionaryIndex:
    dictionary: Dictionary
    suffix_order: np.ndarray
    _lcp: np.ndarray = field(repr=False)
    _bucket_min: np.ndarray = field(repr=False)
    _sparse: np.ndarray = field(repr=False)
    _keys: np.ndarray = field(repr=False)
    _prefix: np.ndarray = field(repr=False)

    @property
    def data(self) -> np.ndarray:
        return self.dictionary.array

    def kernel_args(self):
        return (self.data, self.suffix_order, self._lcp, self._bucket_min, self._sparse,
                self._keys, self._prefix)


def _sparse_table(values: np.ndarray) -> np.ndarray:
    """Row ``j`` holds minima over windows of ``2**j`` starting at each index."""
    m = len(values)
    levels = max(1, int(m).bit_length())
    table = np.empty((levels, m), dtype=np.int32)
    table[0] = values
    for j in range(1, levels):
        half = 1 << (j - 1)
        table[j] = table[j - 1]
        np.minimum(table[j - 1][:m - half], table[j - 1][half:], out=table[j][:m - half])
    return table


def index_dictionary(d: Dictionary) -> DictionaryIndex:
    if len(d.data) == 0:
        raise ParameterError("cannot index an empty dictionary")
    text = np.array(d.array)
    sa = np.asarray(divsufsort(text), dtype=np.int32)
    lcp = np.asarray(kasai(text, sa), dtype=np.int32)
    n = len(sa)
    pad = (-n) % RMQ_BUCKET
    padded = np.concatenate([sa, np.full(pad, np.iinfo(np.int32).max, dtype=np.int32)])
    bucket_min = padded.reshape(-1, RMQ_BUCKET).min(axis=1).astype(np.int32)
    keys = _suffix_keys(text, sa)
    prefix = np.searchsorted(keys >> np.uint64(48), np.arange(65537, dtype=np.uint64)).astype(np.int64)
    return DictionaryIndex(d, sa, lcp, bucket_min, _sparse_table(bucket_min), keys, prefix)


def longest_match(idx: DictionaryIndex, s) -> tuple[int, int]:
    """Return ``(offset, length)`` of the longest prefix of ``s`` found in the dictionary.

    ``(0, 0)`` means not even the first byte occurs.
    """
    q = as_array(s)
    if len(q) == 0:
        return 0, 0
    length, offset = _match(*idx.kernel_args(), q, 0, len(q))
    return int(offset), int(length)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, inline="always")
def _extend(D, start, q, j, qe):
    # Advance j while q[j] matches D[start + (j - ...)]; returns mismatch index in q.
    n = len(D)
    i = start
    while j < qe and i < n and D[i] == q[j]:
        i += 1
        j += 1
    return j, i


@njit(cache=True)
def _suffix_keys(D, SA):
    # First KEY_BYTES bytes of each suffix, big-endian, zero-padded.  Sorted
    # along SA, so most binary-search steps can compare keys instead of text.
    n = len(D)
    keys = np.empty(n, dtype=np.uint64)
    for i in range(n):
        keys[i] = _key(D, SA[i], n)
    return keys


@njit(cache=True, inline="always")
def _key(buf, start, end):
    k = np.uint64(0)
    for t in range(KEY_BYTES):
        k <<= np.uint64(8)
        if start + t < end:
            k |= np.uint64(buf[start + t])
    return k


@njit(cache=True)
def _bound(D, SA, q, qs, qe, lo, hi, upper):
    """First index in [lo, hi) whose suffix is >= q[qs:qe] (or > when ``upper``).

    A suffix that has q[qs:qe] as a prefix compares equal.
    """
    n = len(D)
    l = lo - 1
    r = hi
    lcp_l = 0
    lcp_r = 0
    while r - l > 1:
        m = (l + r) >> 1
        k = min(lcp_l, lcp_r)
        j, i = _extend(D, SA[m] + k, q, qs + k, qe)
        k = j - qs
        if j == qe:
            go_right = upper
        elif i == n or D[i] < q[j]:
            go_right = True
        else:
            go_right = False
        if go_right:
            l = m
            lcp_l = k
        else:
            r = m
            lcp_r = k
    return r


@njit(cache=True)
def _range_min(SA, bucket_min, sparse, a, b):
    # Minimum of SA[a:b], b > a.
    best = np.int32(2147483647)
    if b - a <= 2 * 32:
        for i in range(a, b):
            if SA[i] < best:
                best = SA[i]
        return best
    ba = (a + 31) // 32
    bb = b // 32
    for i in range(a, ba * 32):
        if SA[i] < best:
            best = SA[i]
    for i in range(bb * 32, b):
        if SA[i] < best:
            best = SA[i]
    if bb > ba:
        span = bb - ba
        j = 0
        while (2 << j) <= span:
            j += 1
        v = min(sparse[j, ba], sparse[j, bb - (1 << j)])
        if v < best:
            best = v
    return best


@njit(cache=True)
def _match(D, SA, LCP, bucket_min, sparse, keys, prefix, q, qs, qe):
    """Longest prefix of q[qs:qe] occurring in D; returns (length, smallest offset).

    LCP[i] is the common prefix length of suffixes SA[i] and SA[i + 1].
    """
    n = len(D)
    if qe <= qs or n == 0:
        return 0, 0
    # Narrow to the suffixes whose key equals q's key.  A smaller key means a
    # smaller suffix, a larger key a larger one or one with q as a prefix.
    qk = _key(q, qs, qe)
    h = qk >> np.uint64(48)
    lo = prefix[h]
    hi = prefix[h + 1]
    a = lo
    b = hi
    while a < b:
        m = (a + b) >> 1
        if keys[m] < qk:
            a = m + 1
        else:
            b = m
    l = a - 1
    b = hi
    while a < b:
        m = (a + b) >> 1
        if keys[m] <= qk:
            a = m + 1
        else:
            b = m
    r = a
    lcp_l = 0
    lcp_r = 0
    if l >= 0:
        lcp_l = _extend(D, SA[l], q, qs, qe)[0] - qs
    if r < n:
        lcp_r = _extend(D, SA[r], q, qs, qe)[0] - qs
    # Locate q among the remaining suffixes, tracking the common prefix with both neighbours.
    while r - l > 1:
        m = (l + r) >> 1
        k = min(lcp_l, lcp_r)
        j, i = _extend(D, SA[m] + k, q, qs + k, qe)
        k = j - qs
        if j == qe:
            r = m
            lcp_r = k
        elif i == n or D[i] < q[j]:
            l = m
            lcp_l = k
        else:
            r = m
            lcp_r = k
    length = max(lcp_l, lcp_r)
    if length == 0:
        return 0, 0

    # Every suffix sharing the first `length` bytes lies in one contiguous
    # run around l/r; walk it through the LCP array while it is short.
    a = l if lcp_l == length else r
    b = a
    best = SA[a]
    steps = 0
    while a > 0 and LCP[a - 1] >= length and steps < SCAN_LIMIT:
        a -= 1
        steps += 1
        if SA[a] < best:
            best = SA[a]
    wide = False
    if a > 0 and LCP[a - 1] >= length:
        a = _bound(D, SA, q, qs, qs + length, 0, a, False)
        wide = True
    steps = 0
    while b + 1 < n and LCP[b] >= length and steps < SCAN_LIMIT:
        b += 1
        steps += 1
        if SA[b] < best:
            best = SA[b]
    if b + 1 < n and LCP[b] >= length:
        b = _bound(D, SA, q, qs, qs + length, b + 1, n, True) - 1
        wide = True
    if wide:
        best = _range_min(SA, bucket_min, sparse, a, b + 1)
    return length, best
