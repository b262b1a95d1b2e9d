"""Greedy factorization of blocks against a dictionary, and its inverse."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .corpus import as_array
from .dictionary import Dictionary, DictionaryIndex, _match
from .errors import CorruptionError, ParameterError

DEFAULT_MIN_LITERAL = 4


class Mode(enum.Enum):
    INTERLEAVED = "interleaved"
    THREE_STREAM = "three_stream"



@dataclass(frozen=True, eq=False)
class FactorStreams:
    """Parallel factor streams for one block.

    In interleaved mode a zero length marks a literal whose byte value sits
    in the offset slot.  In three-stream mode a zero length marks a literal
    run: the offset slot holds the run length and the bytes live in
    ``literals``.
    """

    offsets: np.ndarray
    lengths: np.ndarray
    literals: bytes
    mode: Mode
    block_len: int
    min_literal: int = 1

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.ascontiguousarray(self.offsets, dtype=np.uint32))
        object.__setattr__(self, "lengths", np.ascontiguousarray(self.lengths, dtype=np.uint32))
        if len(self.offsets) != len(self.lengths):
            raise ParameterError("offsets and lengths differ in length")

    def __len__(self):
        return len(self.lengths)

    def __eq__(self, other):
        if not isinstance(other, FactorStreams):
            return NotImplemented
        return (self.mode == other.mode and self.block_len == other.block_len
                and self.literals == other.literals
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.lengths, other.lengths))

    @property
    def factor_count(self) -> int:
        return len(self.lengths)

    def covered(self) -> int:
        """Number of block bytes the streams describe."""
        if self.mode is Mode.INTERLEAVED:
            return int(np.maximum(self.lengths, 1).sum(dtype=np.int64))
        return int(np.where(self.lengths == 0, self.offsets, self.lengths).sum(dtype=np.int64))


def factorize_block(idx: DictionaryIndex, block, mode: Mode | str = Mode.INTERLEAVED,
                    min_literal: int = DEFAULT_MIN_LITERAL) -> FactorStreams:
    """Greedy left-to-right parse of ``block`` against the indexed dictionary."""
    mode = Mode(mode)
    b = as_array(block)
    if len(b) == 0:
        raise ParameterError("cannot factorize an empty block")
    if mode is Mode.THREE_STREAM and min_literal < 1:
        raise ParameterError("min_literal must be at least 1")
    offs, lens, lits, counts, nlits = factorize_blocks(
        idx, b, len(b), mode, min_literal)
    return FactorStreams(offs, lens, lits.tobytes(), mode, len(b),
                         min_literal if mode is Mode.THREE_STREAM else 1)


def factorize_blocks(idx: DictionaryIndex, data: np.ndarray, block_size: int,
                     mode: Mode, min_literal: int):
    """Factorize every ``block_size`` block of ``data`` in one pass.

    Returns concatenated offsets, lengths and literal bytes together with
    per-block factor counts and literal byte counts.
    """
    three = Mode(mode) is Mode.THREE_STREAM
    offs, lens, lits, counts, nlits = _factorize_all(*idx.kernel_args(), data, block_size, three,
                                                     max(1, min_literal) if three else 1)
    # The kernel over-allocates; copy so the trimmed arrays own their memory.
    return offs.copy(), lens.copy(), lits.copy(), counts, nlits


def regroup_three_stream(offs, lens, counts, data: np.ndarray, block_size: int,
                         min_literal: int):
    """Turn interleaved factors into three-stream factors without reparsing.

    Both parses visit the same block positions, since a short match is
    consumed whole either as a copy or as literal bytes, so the
    three-stream output follows from the interleaved one.
    """
    if min_literal < 1:
        raise ParameterError("min_literal must be at least 1")
    o, l, lits, c, nl = _regroup(np.asarray(offs, dtype=np.uint32),
                                 np.asarray(lens, dtype=np.uint32),
                                 np.asarray(counts, dtype=np.int64), data, block_size,
                                 min_literal)
    return o.copy(), l.copy(), lits.copy(), c, nl


def split_blocks(offs, lens, lits, counts, nlits, data_len, block_size, mode, min_literal=1):
    """Yield one :class:`FactorStreams` per block from :func:`factorize_blocks` output."""
    fpos = 0
    lpos = 0
    for i in range(len(counts)):
        f = int(counts[i])
        nl = int(nlits[i])
        blen = min(block_size, data_len - i * block_size)
        yield FactorStreams(offs[fpos:fpos + f], lens[fpos:fpos + f],
                            lits[lpos:lpos + nl].tobytes(), mode, blen, min_literal)
        fpos += f
        lpos += nl


def defactorize(d: Dictionary | np.ndarray | bytes, fs: FactorStreams) -> bytes:
    """Rebuild the block described by ``fs``."""
    out = np.empty(fs.block_len, dtype=np.uint8)
    decode_into(d, fs, out)
    return out.tobytes()


def decode_into(d, fs: FactorStreams, out: np.ndarray) -> None:
    D = d.array if isinstance(d, Dictionary) else as_array(d)
    lits = np.frombuffer(fs.literals, dtype=np.uint8)
    status = _expand(D, fs.offsets, fs.lengths, lits,
                     fs.mode is Mode.THREE_STREAM, out)
    if status == 1:
        raise CorruptionError("factor reaches beyond the dictionary")
    if status == 2:
        raise CorruptionError("factor streams overrun the block length")
    if status == 3:
        raise CorruptionError("literal run exhausts the literal stream")
    if status == 4:
        raise CorruptionError("factor streams end before the block is complete")
    if status == 5:
        raise CorruptionError("literal stream has unused bytes")
    if status == 6:
        raise CorruptionError("interleaved literal is not a byte value")


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _factorize_all(D, SA, LCP, bucket_min, sparse, keys, prefix, data, block_size, three, min_literal):
    n = len(data)
    nblocks = (n + block_size - 1) // block_size
    offs = np.empty(n, dtype=np.uint32)
    lens = np.empty(n, dtype=np.uint32)
    lits = np.empty(n if three else 0, dtype=np.uint8)
    counts = np.zeros(nblocks, dtype=np.int64)
    nlits = np.zeros(nblocks, dtype=np.int64)
    f = 0
    nl = 0
    for b in range(nblocks):
        p = b * block_size
        end = min(n, p + block_size)
        f0 = f
        l0 = nl
        run = 0
        while p < end:
            length, off = _match(D, SA, LCP, bucket_min, sparse, keys, prefix, data, p, end)
            if not three:
                if length == 0:
                    offs[f] = data[p]
                    lens[f] = 0
                    p += 1
                else:
                    offs[f] = off
                    lens[f] = length
                    p += length
                f += 1
            elif length < min_literal:
                k = max(length, 1)
                for t in range(k):
                    lits[nl + t] = data[p + t]
                nl += k
                run += k
                p += k
            else:
                if run:
                    offs[f] = run
                    lens[f] = 0
                    f += 1
                    run = 0
                offs[f] = off
                lens[f] = length
                f += 1
                p += length
        if run:
            offs[f] = run
            lens[f] = 0
            f += 1
        counts[b] = f - f0
        nlits[b] = nl - l0
    return offs[:f], lens[:f], lits[:nl], counts, nlits


@njit(cache=True)
def _regroup(offs, lens, counts, data, block_size, min_literal):
    m = len(lens)
    new_offs = np.empty(m, dtype=np.uint32)
    new_lens = np.empty(m, dtype=np.uint32)
    lits = np.empty(len(data), dtype=np.uint8)
    new_counts = np.zeros(len(counts), dtype=np.int64)
    nlits = np.zeros(len(counts), dtype=np.int64)
    f = 0
    g = 0
    nl = 0
    for b in range(len(counts)):
        p = b * block_size
        g0 = g
        l0 = nl
        run = 0
        for _ in range(counts[b]):
            L = np.int64(lens[f])
            o = offs[f]
            f += 1
            if L < min_literal:
                if L == 0:
                    lits[nl] = o
                    nl += 1
                    run += 1
                    p += 1
                else:
                    for t in range(L):
                        lits[nl + t] = data[p + t]
                    nl += L
                    run += L
                    p += L
            else:
                if run:
                    new_offs[g] = run
                    new_lens[g] = 0
                    g += 1
                    run = 0
                new_offs[g] = o
                new_lens[g] = L
                g += 1
                p += L
        if run:
            new_offs[g] = run
            new_lens[g] = 0
            g += 1
        new_counts[b] = g - g0
        nlits[b] = nl - l0
    return new_offs[:g], new_lens[:g], lits[:nl], new_counts, nlits


@njit(cache=True, nogil=True)
def _expand(D, offs, lens, lits, three, out):
    n = len(D)
    m = len(out)
    p = 0
    lp = 0
    for i in range(len(lens)):
        L = np.int64(lens[i])
        o = np.int64(offs[i])
        if L == 0:
            if three:
                if p + o > m:
                    return 2
                if lp + o > len(lits):
                    return 3
                for t in range(o):
                    out[p + t] = lits[lp + t]
                lp += o
                p += o
            else:
                if p >= m:
                    return 2
                if o > 255:
                    return 6
                out[p] = o
                p += 1
        else:
            if o + L > n:
                return 1
            if p + L > m:
                return 2
            for t in range(L):
                out[p + t] = D[o + t]
            p += L
    if p != m:
        return 4
    if lp != len(lits):
        return 5
    return 0
