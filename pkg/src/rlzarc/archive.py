"""Archive container: header, block payloads, dictionary record, block table, manifest.

Layout, all integers little-endian::

    "RLZA" u16 version, u8 scheme id, u8 log2(block size),
    u64 source length, u64 block count, u64 dictionary record offset,
    u64 table offset, u64 manifest offset (0 when absent), u64 header checksum
    block payloads, back to back
    dictionary record: u32 sample size, u64 dictionary length, DEFLATE(dictionary)
        [RLZ_ZZ_PRIMED only] u32 n, DEFLATE(offsets prime) in n bytes, then the same
        for the lengths prime
    DEFLATE(block table as (u64 file offset, u32 payload length) pairs)
    [manifest] u64 count, then per document: u32 id length, UTF-8 id, u64 start, u64 length

The checksum is the first eight bytes of BLAKE2b over the header with the
checksum field zeroed.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
import zlib
from dataclasses import dataclass

import numpy as np

from .codecs import (
    PrimingContext, Scheme, SchemeId, build_integer_primes, decode_block, decode_block_into,
    decode_raw,
    deflate_compress, deflate_decompress, encode_block, encode_raw,
)
from .corpus import as_array
from .dictionary import Dictionary, DictionaryIndex, index_dictionary, sampling_plan
from .errors import ArchiveIOError, CorruptionError, ParameterError
from .factorize import (
    DEFAULT_MIN_LITERAL, Mode, decode_into, factorize_blocks, regroup_three_stream, split_blocks,
)

log = logging.getLogger(__name__)

MAGIC = b"RLZA"
# Bumped whenever any payload format (including FASTLZ) changes.
VERSION = 1
HEADER = struct.Struct("<4sHBBQQQQQQ")
HEADER_SIZE = HEADER.size
DICT_RECORD = struct.Struct("<IQ")
TABLE_DTYPE = np.dtype([("offset", "<u8"), ("length", "<u4")])
MIN_BLOCK_SIZE = 4096
# Blocks whose factor streams seed the integer primes.
PRIME_BLOCKS = 64


@dataclass(frozen=True)
class ArchiveHeader:
    scheme: SchemeId
    block_size: int
    source_length: int
    block_count: int
    dict_offset: int
    table_offset: int
    manifest_offset: int = 0
    version: int = VERSION

    def pack(self) -> bytes:
        raw = HEADER.pack(MAGIC, self.version, int(self.scheme), self.block_size.bit_length() - 1,
                          self.source_length, self.block_count, self.dict_offset,
                          self.table_offset, self.manifest_offset, 0)
        return raw[:-8] + _checksum(raw).to_bytes(8, "little")

    @classmethod
    def unpack(cls, raw: bytes) -> ArchiveHeader:
        if len(raw) < HEADER_SIZE:
            raise CorruptionError("file too short for an archive header")
        (magic, version, scheme, log_bs, src_len, count, d_off, t_off, m_off,
         checksum) = HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise CorruptionError("not an RLZ archive (bad magic)")
        if version != VERSION:
            raise CorruptionError(f"unsupported archive version {version}")
        if checksum != _checksum(raw[:HEADER_SIZE - 8] + bytes(8)):
            raise CorruptionError("header checksum mismatch")
        try:
            sid = SchemeId(scheme)
        except ValueError:
            raise CorruptionError(f"unknown scheme id {scheme}") from None
        return cls(sid, 1 << log_bs, src_len, count, d_off, t_off, m_off, version)


def _checksum(raw: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")


def check_block_size(block_size: int) -> None:
    if block_size < MIN_BLOCK_SIZE or block_size & (block_size - 1):
        raise ParameterError(f"block size {block_size} must be a power of two >= 4 KiB")


def block_count_for(source_length: int, block_size: int) -> int:
    return -(-source_length // block_size)


def locate_blocks(header, start: int, length: int) -> tuple[int, int, int]:
    """Return ``(first_block, last_block, offset_in_first)`` for a byte range."""
    if length < 1 or start < 0 or start + length > header.source_length:
        raise ParameterError(
            f"range [{start}, {start + length}) outside [0, {header.source_length})")
    bs = header.block_size
    return start // bs, (start + length - 1) // bs, start % bs


@dataclass(frozen=True)
class ManifestEntry:
    doc_id: str
    start: int
    length: int


def _check_manifest(entries, source_length):
    prev_end = 0
    for e in entries:
        if e.start < prev_end or e.length < 0 or e.start + e.length > source_length:
            raise ParameterError(f"manifest entry {e.doc_id!r} is out of order or out of range")
        prev_end = e.start + e.length


def _pack_manifest(entries) -> bytes:
    out = [struct.pack("<Q", len(entries))]
    for e in entries:
        name = e.doc_id.encode("utf-8")
        out.append(struct.pack("<I", len(name)) + name + struct.pack("<QQ", e.start, e.length))
    return b"".join(out)


def _unpack_manifest(buf: bytes) -> list[ManifestEntry]:
    try:
        (count,) = struct.unpack_from("<Q", buf, 0)
        pos = 8
        entries = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            if len(buf) < pos + n + 16:
                raise CorruptionError("manifest is truncated")
            pos += n
            start, length = struct.unpack_from("<QQ", buf, pos)
            pos += 16
            entries.append(ManifestEntry(name, start, length))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptionError(f"manifest is malformed: {exc}") from exc
    return entries


@dataclass
class CorpusFactors:
    """Factorization of a whole corpus at one block size, reusable across schemes."""

    mode: Mode
    block_size: int
    min_literal: int
    offsets: np.ndarray
    lengths: np.ndarray
    literals: np.ndarray
    counts: np.ndarray
    literal_counts: np.ndarray
    source_length: int

    def blocks(self):
        return split_blocks(self.offsets, self.lengths, self.literals, self.counts,
                            self.literal_counts, self.source_length, self.block_size,
                            self.mode, self.min_literal if self.mode is Mode.THREE_STREAM else 1)

    def regroup(self, corpus, min_literal: int = DEFAULT_MIN_LITERAL) -> CorpusFactors:
        """Three-stream factors derived from this interleaved factorization."""
        if self.mode is not Mode.INTERLEAVED:
            raise ParameterError("only interleaved factors can be regrouped")
        data = as_array(corpus)
        if len(data) != self.source_length:
            raise ParameterError("corpus length differs from the factorized corpus")
        offs, lens, lits, counts, nlits = regroup_three_stream(
            self.offsets, self.lengths, self.counts, data, self.block_size, min_literal)
        return CorpusFactors(Mode.THREE_STREAM, self.block_size, min_literal, offs, lens, lits,
                             counts, nlits, self.source_length)


def factorize_corpus(idx: DictionaryIndex, corpus, block_size: int, mode: Mode | str,
                     min_literal: int = DEFAULT_MIN_LITERAL) -> CorpusFactors:
    data = as_array(corpus)
    mode = Mode(mode)
    offs, lens, lits, counts, nlits = factorize_blocks(idx, data, block_size, mode, min_literal)
    return CorpusFactors(mode, block_size, min_literal, offs, lens, lits, counts, nlits, len(data))


@dataclass
class WriteSummary:
    path: str
    scheme: SchemeId
    block_size: int
    source_length: int
    block_count: int
    file_size: int
    payload_bytes: int
    dictionary_bytes: int
    table_bytes: int
    manifest_bytes: int
    header_bytes: int = HEADER_SIZE

    @property
    def rate(self) -> float:
        return self.file_size / self.source_length if self.source_length else 0.0


def prime_block_indices(d: Dictionary, block_size: int, block_count: int) -> list[int]:
    """Blocks holding the first dictionary sample positions, in order, without repeats."""
    picked = []
    for i in range(min(PRIME_BLOCKS, d.sample_count)):
        b = d.sample_source_offset(i) // block_size
        if b < block_count and (not picked or picked[-1] != b):
            picked.append(b)
    return picked


def write_archive(path, corpus, dictionary: Dictionary | None = None,
                  index: DictionaryIndex | None = None, scheme=SchemeId.RLZ_PV,
                  block_size: int = 16384, manifest=None,
                  min_literal: int = DEFAULT_MIN_LITERAL,
                  factors: CorpusFactors | None = None) -> WriteSummary:
    """Compress ``corpus`` into an archive at ``path``.

    ``factors`` may carry a precomputed factorization (same dictionary,
    block size and mode) to skip the parse when writing several schemes.
    """
    check_block_size(block_size)
    data = as_array(corpus)
    n = len(data)
    sid = Scheme.for_dictionary(scheme, 0).id
    if sid.needs_dictionary:
        if dictionary is None:
            raise ParameterError(f"{sid.name} needs a dictionary")
        if sid.uses_factors and index is None:
            index = index_dictionary(dictionary)
        if index is not None and index.dictionary is not dictionary:
            raise ParameterError("index was built over a different dictionary")
        if dictionary.source_length != n:
            raise ParameterError("dictionary was sampled from a different corpus length")
        dict_len = len(dictionary)
    else:
        dictionary = None
        dict_len = 0
    sch = Scheme.for_dictionary(sid, dict_len, min_literal)
    count = block_count_for(n, block_size)
    entries = [e if isinstance(e, ManifestEntry) else ManifestEntry(*e) for e in (manifest or [])]
    _check_manifest(entries, n)

    priming = PrimingContext(dictionary=dictionary)
    offsets = np.zeros(count, dtype=np.uint64)
    lengths = np.zeros(count, dtype=np.uint32)
    try:
        fh = open(path, "wb")
    except OSError as exc:
        raise ArchiveIOError(f"cannot create {path}: {exc}") from exc
    with fh:
        try:
            fh.write(bytes(HEADER_SIZE))
            pos = HEADER_SIZE
            if sid.uses_factors:
                if factors is None:
                    factors = factorize_corpus(index, data, block_size, sid.mode, min_literal)
                elif (factors.block_size != block_size or factors.mode is not sid.mode
                      or factors.source_length != n):
                    raise ParameterError("precomputed factors do not match this archive")
                streams = factors.blocks()
                if sid == SchemeId.RLZ_ZZ_PRIMED:
                    streams = list(streams)
                    chosen = [streams[i] for i in prime_block_indices(dictionary, block_size, count)]
                    priming = PrimingContext(*build_integer_primes(chosen), dictionary)
                for i, fs in enumerate(streams):
                    payload = encode_block(fs, sch, priming).payload
                    fh.write(payload)
                    offsets[i] = pos
                    lengths[i] = len(payload)
                    pos += len(payload)
            else:
                for i in range(count):
                    start = i * block_size
                    block = data[start:start + block_size].tobytes()
                    prime = (priming.text_prime(start, len(block))
                             if sid == SchemeId.DEF_BLOCK_PRIMED else None)
                    payload = encode_raw(block, sch, prime).payload
                    fh.write(payload)
                    offsets[i] = pos
                    lengths[i] = len(payload)
                    pos += len(payload)
            payload_bytes = pos - HEADER_SIZE

            dict_offset = pos
            if dictionary is not None:
                record = (DICT_RECORD.pack(dictionary.sample_size, len(dictionary))
                          + deflate_compress(dictionary.data))
            else:
                record = DICT_RECORD.pack(0, 0) + deflate_compress(b"")
            if sid == SchemeId.RLZ_ZZ_PRIMED:
                for prime in (priming.offsets_prime, priming.lengths_prime):
                    z = deflate_compress(prime)
                    record += struct.pack("<I", len(z)) + z
            fh.write(record)
            pos += len(record)

            table_offset = pos
            table = np.empty(count, dtype=TABLE_DTYPE)
            table["offset"] = offsets
            table["length"] = lengths
            ztable = deflate_compress(table.tobytes())
            fh.write(ztable)
            pos += len(ztable)

            manifest_offset = 0
            mbytes = b""
            if entries:
                manifest_offset = pos
                mbytes = _pack_manifest(entries)
                fh.write(mbytes)
                pos += len(mbytes)

            header = ArchiveHeader(sid, block_size, n, count, dict_offset, table_offset,
                                   manifest_offset)
            fh.seek(0)
            fh.write(header.pack())
        except OSError as exc:
            raise ArchiveIOError(f"write to {path} failed: {exc}") from exc
    log.debug("wrote %s: %d blocks, %d bytes", path, count, pos)
    return WriteSummary(str(path), sid, block_size, n, count, pos, payload_bytes,
                        len(record), len(ztable), len(mbytes))


@dataclass
class ReaderCounters:
    blocks_fetched: int = 0
    bytes_fetched: int = 0
    reads: int = 0


class ArchiveReader:
    """Memory-resident dictionary and block table over an archive file.

    Block payloads are fetched on demand with positional reads, so one
    reader can serve concurrent queries.
    """

    def __init__(self, path):
        self.path = str(path)
        try:
            self._fd = os.open(self.path, os.O_RDONLY)
        except OSError as exc:
            raise ArchiveIOError(f"cannot open {path}: {exc}") from exc
        try:
            self._load()
        except Exception:
            os.close(self._fd)
            self._fd = -1
            raise
        self.counters = ReaderCounters()
        self._lock = threading.Lock()

    def _pread(self, n, off) -> bytes:
        try:
            buf = os.pread(self._fd, n, off)
        except OSError as exc:
            raise ArchiveIOError(f"read from {self.path} failed: {exc}") from exc
        if len(buf) != n:
            raise CorruptionError("archive is truncated")
        return buf

    def _load(self):
        self.file_size = os.fstat(self._fd).st_size
        self.header = h = ArchiveHeader.unpack(self._pread(min(HEADER_SIZE, self.file_size), 0))
        if not (HEADER_SIZE <= h.dict_offset <= h.table_offset <= self.file_size
                and h.manifest_offset <= self.file_size):
            raise CorruptionError("archive section offsets are inconsistent")
        if h.block_count != block_count_for(h.source_length, h.block_size):
            raise CorruptionError("block count disagrees with source length")
        end = h.manifest_offset or self.file_size
        meta = self._pread(end - h.dict_offset, h.dict_offset)

        sample_size, dict_len = DICT_RECORD.unpack_from(meta, 0)
        dec = zlib.decompressobj(-15)
        try:
            ddata = dec.decompress(meta[DICT_RECORD.size:])
        except zlib.error as exc:
            raise CorruptionError(f"dictionary record is corrupt: {exc}") from exc
        if not dec.eof or len(ddata) != dict_len:
            raise CorruptionError("dictionary record is truncated")
        rest = dec.unused_data
        if dict_len:
            if sample_size == 0 or dict_len % sample_size:
                raise CorruptionError("dictionary sample size is inconsistent")
            _, interval = sampling_plan(h.source_length, dict_len, sample_size)
            self.dictionary = Dictionary(ddata, sample_size, h.source_length, interval)
        else:
            self.dictionary = None
        offsets_prime = lengths_prime = b""
        if h.scheme == SchemeId.RLZ_ZZ_PRIMED:
            primes = []
            for _ in range(2):
                try:
                    (k,) = struct.unpack_from("<I", rest, 0)
                except struct.error as exc:
                    raise CorruptionError("priming record is truncated") from exc
                primes.append(deflate_decompress(rest[4:4 + k]))
                rest = rest[4 + k:]
            offsets_prime, lengths_prime = primes
        self.priming = PrimingContext(offsets_prime, lengths_prime, self.dictionary)

        table_pos = h.table_offset - h.dict_offset
        if len(meta) - len(rest) != table_pos:
            raise CorruptionError("dictionary record does not end at the block table")
        raw = deflate_decompress(meta[table_pos:], None, h.block_count * TABLE_DTYPE.itemsize)
        table = np.frombuffer(raw, dtype=TABLE_DTYPE)
        self.block_offsets = table["offset"].astype(np.int64)
        self.block_lengths = table["length"].astype(np.int64)
        if h.block_count:
            ends = self.block_offsets + self.block_lengths
            if (self.block_offsets[0] < HEADER_SIZE or ends[-1] > h.dict_offset
                    or np.any(self.block_offsets[1:] <= self.block_offsets[:-1])
                    or np.any(ends[:-1] > self.block_offsets[1:])):
                raise CorruptionError("block table is inconsistent")

        self.manifest = []
        if h.manifest_offset:
            self.manifest = _unpack_manifest(self._pread(self.file_size - h.manifest_offset,
                                                         h.manifest_offset))
        dl = len(self.dictionary) if self.dictionary is not None else 0
        self.scheme = Scheme.for_dictionary(h.scheme, dl)

    # -- metadata -----------------------------------------------------------

    @property
    def source_length(self) -> int:
        return self.header.source_length

    @property
    def block_size(self) -> int:
        return self.header.block_size

    @property
    def block_count(self) -> int:
        return self.header.block_count

    @property
    def dictionary_bytes(self) -> int:
        return len(self.dictionary) if self.dictionary is not None else 0

    @property
    def table_memory_bytes(self) -> int:
        # u64 offset + u32 length per block, as held in memory.
        return self.block_count * TABLE_DTYPE.itemsize

    @property
    def footprint(self) -> int:
        """Resident bytes needed to serve queries: dictionary plus block table."""
        return self.dictionary_bytes + self.table_memory_bytes

    def block_length(self, i: int) -> int:
        return min(self.block_size, self.source_length - i * self.block_size)

    def document(self, doc_id: str) -> ManifestEntry:
        for e in self.manifest:
            if e.doc_id == doc_id:
                return e
        raise KeyError(doc_id)

    # -- block access ---------------------------------------------------------

    def fetch(self, first: int, last: int) -> bytes:
        """Read the contiguous payloads of blocks ``first..last`` in one call."""
        if not 0 <= first <= last < self.block_count:
            raise ParameterError(f"block range {first}..{last} out of bounds")
        start = int(self.block_offsets[first])
        end = int(self.block_offsets[last] + self.block_lengths[last])
        buf = self._pread(end - start, start)
        with self._lock:
            c = self.counters
            c.blocks_fetched += last - first + 1
            c.bytes_fetched += end - start
            c.reads += 1
        return buf

    def payload_slice(self, buf: bytes, first: int, i: int) -> memoryview:
        base = int(self.block_offsets[first])
        off = int(self.block_offsets[i]) - base
        return memoryview(buf)[off:off + int(self.block_lengths[i])]

    def decode_streams(self, i: int, payload):
        return decode_block(bytes(payload), self.scheme, self.dictionary_bytes, self.priming)

    def decode_payload(self, i: int, payload, out: np.ndarray | None = None) -> np.ndarray:
        """Decode block ``i`` from its payload into ``out`` (allocated when None)."""
        blen = self.block_length(i)
        if out is None:
            out = np.empty(blen, dtype=np.uint8)
        sid = self.scheme.id
        if sid in (SchemeId.RLZ_UV, SchemeId.RLZ_PV):
            try:
                decode_block_into(payload, self.scheme, self.dictionary.array, out[:blen])
            except CorruptionError as exc:
                raise CorruptionError(f"block {i}: {exc}") from None
        elif sid.uses_factors:
            fs = self.decode_streams(i, payload)
            if fs.block_len != blen:
                raise CorruptionError(f"block {i} decodes to {fs.block_len} bytes, expected {blen}")
            decode_into(self.dictionary, fs, out[:blen])
        else:
            prime = (self.priming.text_prime(i * self.block_size, blen)
                     if sid == SchemeId.DEF_BLOCK_PRIMED else None)
            raw = decode_raw(bytes(payload), self.scheme, blen, prime)
            out[:blen] = np.frombuffer(raw, dtype=np.uint8)
        return out[:blen]

    def read_block(self, i: int) -> bytes:
        buf = self.fetch(i, i)
        return self.decode_payload(i, buf).tobytes()

    def close(self):
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def open_archive(path) -> ArchiveReader:
    return ArchiveReader(path)
