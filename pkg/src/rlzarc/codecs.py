"""Static integer codes, DEFLATE wrappers and per-block payload schemes."""

from __future__ import annotations

import enum
import struct
import zlib
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CorruptionError, ParameterError
from .factorize import DEFAULT_MIN_LITERAL, FactorStreams, Mode

# Largest preset dictionary DEFLATE can address.
DEFLATE_WINDOW = 32 * 1024
PRIME_SEQUENCE_BYTES = 64 * 1024
DEFLATE_LEVEL = 6

FASTLZ_MIN_MATCH = 4
FASTLZ_MAX_MATCH = FASTLZ_MIN_MATCH + 127
FASTLZ_MAX_LITERALS = 127
FASTLZ_WINDOW = 65535
FASTLZ_CHAIN_DEPTH = 16


class SchemeId(enum.IntEnum):
    COPY = 0
    DEF_BLOCK = 1
    FASTLZ_BLOCK = 2
    RLZ_UV = 3
    RLZ_PV = 4
    RLZ_ZZ = 5
    RLZ_ZZ_PRIMED = 6
    RLZ_ZZZ = 7
    DEF_BLOCK_PRIMED = 8

    @property
    def uses_factors(self) -> bool:
        return self >= SchemeId.RLZ_UV and self != SchemeId.DEF_BLOCK_PRIMED

    @property
    def needs_dictionary(self) -> bool:
        return self.uses_factors or self == SchemeId.DEF_BLOCK_PRIMED

    @property
    def mode(self) -> Mode:
        return Mode.THREE_STREAM if self == SchemeId.RLZ_ZZZ else Mode.INTERLEAVED


def offset_width(dict_len: int) -> int:
    """Bits per packed offset slot: ``ceil(log2 |D|)``, never below one byte.

    Interleaved literals share the slot, so eight bits is the floor.
    """
    return min(32, max(8, (max(dict_len, 1) - 1).bit_length()))


@dataclass(frozen=True)
class Scheme:
    id: SchemeId
    offset_bit_width: int = 32
    min_literal: int = DEFAULT_MIN_LITERAL

    @classmethod
    def for_dictionary(cls, scheme, dict_len: int, min_literal: int = DEFAULT_MIN_LITERAL):
        sid = parse_scheme_id(scheme)
        width = offset_width(dict_len) if sid == SchemeId.RLZ_PV else 32
        return cls(sid, width, min_literal)

    def __post_init__(self):
        if not 1 <= self.offset_bit_width <= 32:
            raise ParameterError("offset_bit_width must be within 1..32")
        if self.min_literal < 1:
            raise ParameterError("min_literal must be at least 1")

    @property
    def name(self) -> str:
        return self.id.name


def parse_scheme_id(scheme) -> SchemeId:
    if isinstance(scheme, Scheme):
        return scheme.id
    if isinstance(scheme, SchemeId):
        return scheme
    if isinstance(scheme, int):
        try:
            return SchemeId(scheme)
        except ValueError:
            raise ParameterError(f"unknown scheme id {scheme}") from None
    key = str(scheme).upper().replace("-", "_")
    try:
        return SchemeId[key]
    except KeyError:
        raise ParameterError(f"unknown scheme {scheme!r}") from None


@dataclass(frozen=True)
class EncodedBlock:
    factor_count: int
    payload: bytes

    def __len__(self):
        return len(self.payload)


# ---------------------------------------------------------------------------
# vbyte


def vbyte_encode(n: int) -> bytes:
    """Seven bits per byte, least significant group first; the last byte has its top bit set."""
    if not 0 <= n < 1 << 32:
        raise ParameterError(f"vbyte value {n} outside 0..2**32-1")
    out = bytearray()
    while n >= 128:
        out.append(n & 0x7F)
        n >>= 7
    out.append(n | 0x80)
    return bytes(out)


def vbyte_decode(buf, pos: int = 0) -> tuple[int, int]:
    """Decode one value at ``pos``; returns ``(value, bytes consumed)``."""
    value = 0
    shift = 0
    i = pos
    while True:
        if i >= len(buf):
            raise CorruptionError("truncated vbyte")
        b = buf[i]
        i += 1
        value |= (b & 0x7F) << shift
        if b & 0x80:
            break
        shift += 7
        if shift > 28:
            raise CorruptionError("vbyte longer than five bytes")
    if value >= 1 << 32:
        raise CorruptionError("vbyte value exceeds 32 bits")
    return value, i - pos


def vbyte_encode_array(values) -> bytes:
    return _vbyte_encode(np.ascontiguousarray(values, dtype=np.uint32)).tobytes()


def vbyte_decode_array(buf, count: int, pos: int = 0) -> tuple[np.ndarray, int]:
    """Decode ``count`` values starting at ``pos``; returns ``(values, end)``."""
    arr = np.frombuffer(buf, dtype=np.uint8)
    values, end, status = _vbyte_decode(arr, pos, count)
    if status:
        raise CorruptionError("truncated or malformed vbyte stream")
    return values, end


@njit(cache=True)
def _vbyte_encode(values):
    out = np.empty(len(values) * 5, dtype=np.uint8)
    o = 0
    for i in range(len(values)):
        v = np.uint64(values[i])
        while v >= 128:
            out[o] = v & 0x7F
            o += 1
            v >>= np.uint64(7)
        out[o] = v | 0x80
        o += 1
    return out[:o]


@njit(cache=True)
def _vbyte_decode(buf, pos, count):
    values = np.empty(count, dtype=np.uint32)
    n = len(buf)
    p = pos
    for i in range(count):
        v = np.uint64(0)
        shift = np.uint64(0)
        while True:
            if p >= n:
                return values, p, 1
            b = np.uint64(buf[p])
            p += 1
            v |= (b & np.uint64(0x7F)) << shift
            if b & np.uint64(0x80):
                break
            shift += np.uint64(7)
            if shift > 28:
                return values, p, 1
        if v >= np.uint64(1) << np.uint64(32):
            return values, p, 1
        values[i] = v
    return values, p, 0


# ---------------------------------------------------------------------------
# bit packing


def pack_bits(values, width: int) -> bytes:
    """Pack ``values`` LSB-first at ``width`` bits each; the last byte is zero-padded."""
    if not 1 <= width <= 32:
        raise ParameterError("width must be within 1..32")
    arr = np.ascontiguousarray(values, dtype=np.uint64)
    if len(arr) and int(arr.max()) >> width:
        raise ParameterError(f"value does not fit in {width} bits")
    return _pack(arr, width).tobytes()


def unpack_bits(buf, count: int, width: int, pos: int = 0) -> np.ndarray:
    if not 1 <= width <= 32:
        raise ParameterError("width must be within 1..32")
    nbytes = (count * width + 7) // 8
    arr = np.frombuffer(buf, dtype=np.uint8)
    if pos + nbytes > len(arr):
        raise CorruptionError("bit-packed stream is truncated")
    return _unpack(arr, pos, count, width)


@njit(cache=True)
def _pack(values, width):
    out = np.zeros((len(values) * width + 7) // 8, dtype=np.uint8)
    acc = np.uint64(0)
    nbits = np.uint64(0)
    o = 0
    w = np.uint64(width)
    for i in range(len(values)):
        acc |= values[i] << nbits
        nbits += w
        while nbits >= 8:
            out[o] = acc & np.uint64(0xFF)
            o += 1
            acc >>= np.uint64(8)
            nbits -= np.uint64(8)
    if nbits:
        out[o] = acc & np.uint64(0xFF)
    return out


@njit(cache=True)
def _unpack(buf, pos, count, width):
    values = np.empty(count, dtype=np.uint32)
    acc = np.uint64(0)
    nbits = np.uint64(0)
    p = pos
    w = np.uint64(width)
    mask = (np.uint64(1) << w) - np.uint64(1)
    for i in range(count):
        while nbits < w:
            acc |= np.uint64(buf[p]) << nbits
            p += 1
            nbits += np.uint64(8)
        values[i] = acc & mask
        acc >>= w
        nbits -= w
    return values


# ---------------------------------------------------------------------------
# DEFLATE


def deflate_compress(data, prime: bytes | None = None, level: int = DEFLATE_LEVEL) -> bytes:
    """Raw DEFLATE, or a zlib-wrapped stream carrying a preset dictionary when primed.

    The zlib wrapper records the dictionary's Adler-32 so a wrong prime is
    detected on decompression.
    """
    if prime:
        if len(prime) > DEFLATE_WINDOW:
            raise ParameterError("prime exceeds the 32 KiB DEFLATE window")
        comp = zlib.compressobj(level, zlib.DEFLATED, 15, zdict=bytes(prime))
    else:
        comp = zlib.compressobj(level, zlib.DEFLATED, -15)
    return comp.compress(data) + comp.flush()


def deflate_decompress(blob, prime: bytes | None = None, expected_len: int | None = None) -> bytes:
    try:
        if prime:
            dec = zlib.decompressobj(15, zdict=bytes(prime))
        else:
            dec = zlib.decompressobj(-15)
        out = dec.decompress(blob)
        out += dec.flush()
    except zlib.error as exc:
        raise CorruptionError(f"DEFLATE stream rejected: {exc}") from exc
    if not dec.eof:
        raise CorruptionError("DEFLATE stream is truncated")
    if dec.unused_data:
        raise CorruptionError("trailing bytes after DEFLATE stream")
    if expected_len is not None and len(out) != expected_len:
        raise CorruptionError(
            f"DEFLATE stream inflated to {len(out)} bytes, expected {expected_len}")
    return out


# ---------------------------------------------------------------------------
# FASTLZ: byte-oriented LZ77 over the block's own history


def fastlz_compress(data) -> bytes:
    src = np.frombuffer(data, dtype=np.uint8)
    return _fastlz_compress(src).tobytes()


def fastlz_decompress(blob, expected_len: int) -> bytes:
    out = np.empty(expected_len, dtype=np.uint8)
    status = _fastlz_decompress(np.frombuffer(blob, dtype=np.uint8), out)
    if status:
        raise CorruptionError(f"FASTLZ stream rejected (code {status})")
    return out.tobytes()


@njit(cache=True, inline="always")
def _hash4(src, pos):
    x = (np.int64(src[pos]) | (np.int64(src[pos + 1]) << 8)
         | (np.int64(src[pos + 2]) << 16) | (np.int64(src[pos + 3]) << 24))
    return ((x * 2654435761) & 0xFFFFFFFF) >> 16


@njit(cache=True)
def _fastlz_compress(src):
    n = len(src)
    out = np.empty(n + n // FASTLZ_MAX_LITERALS + 16, dtype=np.uint8)
    head = np.full(1 << 16, -1, dtype=np.int64)
    prev = np.full(max(n, 1), -1, dtype=np.int64)
    o = 0
    pos = 0
    lit = 0
    while pos + FASTLZ_MIN_MATCH <= n:
        h = _hash4(src, pos)
        best = 0
        dist = 0
        cand = head[h]
        depth = 0
        limit = min(FASTLZ_MAX_MATCH, n - pos)
        while cand >= 0 and pos - cand <= FASTLZ_WINDOW and depth < FASTLZ_CHAIN_DEPTH:
            k = 0
            while k < limit and src[cand + k] == src[pos + k]:
                k += 1
            if k > best:
                best = k
                dist = pos - cand
                if k == limit:
                    break
            cand = prev[cand]
            depth += 1
        prev[pos] = head[h]
        head[h] = pos
        if best >= FASTLZ_MIN_MATCH:
            while lit < pos:
                run = min(FASTLZ_MAX_LITERALS, pos - lit)
                out[o] = run
                out[o + 1:o + 1 + run] = src[lit:lit + run]
                o += 1 + run
                lit += run
            out[o] = 0x80 | (best - FASTLZ_MIN_MATCH)
            out[o + 1] = dist & 0xFF
            out[o + 2] = dist >> 8
            o += 3
            end = pos + best
            pos += 1
            while pos < end:
                if pos + FASTLZ_MIN_MATCH <= n:
                    h = _hash4(src, pos)
                    prev[pos] = head[h]
                    head[h] = pos
                pos += 1
            lit = pos
        else:
            pos += 1
    while lit < n:
        run = min(FASTLZ_MAX_LITERALS, n - lit)
        out[o] = run
        out[o + 1:o + 1 + run] = src[lit:lit + run]
        o += 1 + run
        lit += run
    return out[:o]


@njit(cache=True)
def _fastlz_decompress(src, out):
    n = len(src)
    m = len(out)
    i = 0
    o = 0
    while i < n:
        c = src[i]
        i += 1
        if c & 0x80:
            if i + 2 > n:
                return 1
            length = (c & 0x7F) + FASTLZ_MIN_MATCH
            dist = np.int64(src[i]) | (np.int64(src[i + 1]) << 8)
            i += 2
            if dist == 0 or dist > o:
                return 2
            if o + length > m:
                return 3
            s = o - dist
            for k in range(length):
                out[o + k] = out[s + k]
            o += length
        else:
            if c == 0:
                return 4
            if i + c > n:
                return 1
            if o + c > m:
                return 3
            out[o:o + c] = src[i:i + c]
            i += c
            o += c
    if o != m:
        return 5
    return 0


# ---------------------------------------------------------------------------
# priming


@dataclass(frozen=True)
class PrimingContext:
    """Fixed preset data shared by every block of one archive."""

    offsets_prime: bytes = b""
    lengths_prime: bytes = b""
    dictionary: object = None

    def text_prime(self, block_start: int, block_len: int) -> bytes:
        """Up to 32 KiB of dictionary text sampled nearest the block.

        The window ends with the last sample drawn from before the block's
        end, so text sampled from inside the block sits closest to it.
        """
        d = self.dictionary
        if d is None or len(d) == 0:
            raise ParameterError("text priming needs a dictionary")
        s = d.sample_size
        last = min(d.sample_count, (block_start + max(block_len, 1) - 1) // d.sample_interval + 1)
        end = last * s
        start = max(0, end - DEFLATE_WINDOW)
        end = min(len(d), start + DEFLATE_WINDOW)
        return d.data[start:end]

    @property
    def offsets_window(self) -> bytes:
        return self.offsets_prime[-DEFLATE_WINDOW:]

    @property
    def lengths_window(self) -> bytes:
        return self.lengths_prime[-DEFLATE_WINDOW:]


def build_integer_primes(streams, size: int = PRIME_SEQUENCE_BYTES) -> tuple[bytes, bytes]:
    """Frequency-ranked u32 sequences of factor offsets and lengths.

    Values appear in ascending frequency so the most common ones end up
    nearest the data, inside DEFLATE's window; short sequences are
    zero-padded at the front.
    """
    per_value = size // 4
    off_count = Counter()
    len_count = Counter()
    for fs in streams:
        off_count.update(fs.offsets.tolist())
        len_count.update(fs.lengths.tolist())

    def serialize(counter):
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:per_value]
        values = np.array([v for v, _ in reversed(ranked)], dtype="<u4")
        raw = values.tobytes()
        return bytes(size - len(raw)) + raw

    return serialize(off_count), serialize(len_count)


# ---------------------------------------------------------------------------
# block payloads

_U32 = struct.Struct("<I")


def _u32le(values) -> bytes:
    return np.ascontiguousarray(values, dtype="<u4").tobytes()


def _check_mode(fs: FactorStreams, scheme: Scheme):
    if fs.mode is not scheme.id.mode:
        raise ParameterError(f"{scheme.name} expects {scheme.id.mode.value} factor streams")


def encode_block(fs: FactorStreams, scheme: Scheme,
                 priming: PrimingContext | None = None) -> EncodedBlock:
    """Serialize factor streams under an RLZ scheme."""
    sid = scheme.id
    if not sid.uses_factors:
        raise ParameterError(f"{scheme.name} does not encode factor streams")
    _check_mode(fs, scheme)
    count = fs.factor_count
    prelude = vbyte_encode(count)
    if sid == SchemeId.RLZ_UV:
        payload = prelude + _u32le(fs.offsets) + vbyte_encode_array(fs.lengths)
    elif sid == SchemeId.RLZ_PV:
        payload = (prelude + pack_bits(fs.offsets, scheme.offset_bit_width)
                   + vbyte_encode_array(fs.lengths))
    else:
        if sid == SchemeId.RLZ_ZZ_PRIMED:
            if priming is None or not priming.offsets_prime:
                raise ParameterError("RLZ_ZZ_PRIMED needs integer primes")
            primes = (priming.offsets_window, priming.lengths_window)
        else:
            primes = (None, None)
        parts = [deflate_compress(_u32le(fs.offsets), primes[0]),
                 deflate_compress(_u32le(fs.lengths), primes[1])]
        if sid == SchemeId.RLZ_ZZZ:
            parts.append(deflate_compress(fs.literals))
        payload = prelude + b"".join(_U32.pack(len(p)) for p in parts) + b"".join(parts)
    return EncodedBlock(count, payload)


def decode_block(eb: EncodedBlock | bytes, scheme: Scheme, dict_len: int | None = None,
                 priming: PrimingContext | None = None) -> FactorStreams:
    """Parse an RLZ payload back into factor streams.

    ``dict_len`` enables the offset range check; the block length is
    recovered from the streams themselves.
    """
    payload = eb.payload if isinstance(eb, EncodedBlock) else bytes(eb)
    sid = scheme.id
    if not sid.uses_factors:
        raise ParameterError(f"{scheme.name} does not carry factor streams")
    count, pos = vbyte_decode(payload, 0)
    if isinstance(eb, EncodedBlock) and eb.factor_count != count:
        raise CorruptionError("factor count disagrees with the prelude")
    literals = b""
    if sid == SchemeId.RLZ_UV:
        end = pos + 4 * count
        if end > len(payload):
            raise CorruptionError("offset stream is truncated")
        offsets = np.frombuffer(payload, dtype="<u4", count=count, offset=pos).astype(np.uint32)
        lengths, pos = vbyte_decode_array(payload, count, end)
    elif sid == SchemeId.RLZ_PV:
        w = scheme.offset_bit_width
        offsets = unpack_bits(payload, count, w, pos)
        lengths, pos = vbyte_decode_array(payload, count, pos + (count * w + 7) // 8)
    else:
        nparts = 3 if sid == SchemeId.RLZ_ZZZ else 2
        if pos + 4 * nparts > len(payload):
            raise CorruptionError("stream table is truncated")
        sizes = [_U32.unpack_from(payload, pos + 4 * k)[0] for k in range(nparts)]
        pos += 4 * nparts
        if sid == SchemeId.RLZ_ZZ_PRIMED:
            if priming is None or not priming.offsets_prime:
                raise ParameterError("RLZ_ZZ_PRIMED needs integer primes")
            primes = (priming.offsets_window, priming.lengths_window, None)
        else:
            primes = (None, None, None)
        raw = []
        for k, size in enumerate(sizes):
            if pos + size > len(payload):
                raise CorruptionError("compressed stream is truncated")
            expect = 4 * count if k < 2 else None
            raw.append(deflate_decompress(payload[pos:pos + size], primes[k], expect))
            pos += size
        offsets = np.frombuffer(raw[0], dtype="<u4").astype(np.uint32)
        lengths = np.frombuffer(raw[1], dtype="<u4").astype(np.uint32)
        if nparts == 3:
            literals = raw[2]
    if pos != len(payload):
        raise CorruptionError("payload has trailing bytes")
    mode = sid.mode
    fs = FactorStreams(offsets, lengths, literals, mode, 0, scheme.min_literal)
    block_len = fs.covered()
    if dict_len is not None and count:
        copies = lengths > 0
        if copies.any() and int((offsets[copies].astype(np.int64) + lengths[copies]).max()) > dict_len:
            raise CorruptionError("factor reaches beyond the dictionary")
    return FactorStreams(offsets, lengths, literals, mode, block_len,
                         scheme.min_literal if mode is Mode.THREE_STREAM else 1)


def encode_raw(data, scheme: Scheme, prime: bytes | None = None) -> EncodedBlock:
    """Whole-block payload for the dictionary-free baselines and primed DEFLATE."""
    sid = scheme.id
    if sid == SchemeId.COPY:
        return EncodedBlock(0, bytes(data))
    if sid == SchemeId.DEF_BLOCK:
        return EncodedBlock(0, deflate_compress(data))
    if sid == SchemeId.DEF_BLOCK_PRIMED:
        if not prime:
            raise ParameterError("DEF_BLOCK_PRIMED needs priming text")
        return EncodedBlock(0, deflate_compress(data, prime))
    if sid == SchemeId.FASTLZ_BLOCK:
        return EncodedBlock(0, fastlz_compress(data))
    raise ParameterError(f"{scheme.name} is not a whole-block scheme")


def decode_raw(payload, scheme: Scheme, block_len: int, prime: bytes | None = None) -> bytes:
    sid = scheme.id
    if sid == SchemeId.COPY:
        if len(payload) != block_len:
            raise CorruptionError("stored block has the wrong length")
        return bytes(payload)
    if sid == SchemeId.DEF_BLOCK:
        return deflate_decompress(payload, None, block_len)
    if sid == SchemeId.DEF_BLOCK_PRIMED:
        return deflate_decompress(payload, prime, block_len)
    if sid == SchemeId.FASTLZ_BLOCK:
        return fastlz_decompress(payload, block_len)
    raise ParameterError(f"{scheme.name} is not a whole-block scheme")


# ---------------------------------------------------------------------------
# fused decoding for the uncompressed-stream schemes

_FUSED_ERRORS = {
    1: "factor reaches beyond the dictionary",
    2: "factor streams overrun the block length",
    4: "factor streams end before the block is complete",
    6: "interleaved literal is not a byte value",
    7: "factor count prelude is malformed",
    8: "offset stream is truncated",
    9: "length stream is malformed",
    10: "payload has trailing bytes",
}


def decode_block_into(payload, scheme: Scheme, dictionary: np.ndarray, out: np.ndarray) -> None:
    """Decode an RLZ_UV or RLZ_PV payload straight into ``out``.

    Equivalent to :func:`decode_block` followed by expansion, without
    materializing the factor streams.  ``out`` must be exactly the block
    length.
    """
    sid = scheme.id
    if sid not in (SchemeId.RLZ_UV, SchemeId.RLZ_PV):
        raise ParameterError(f"{scheme.name} has no fused decoder")
    buf = np.frombuffer(payload, dtype=np.uint8)
    width = 32 if sid == SchemeId.RLZ_UV else scheme.offset_bit_width
    status = _fused_decode(buf, dictionary, width, sid == SchemeId.RLZ_UV, out)
    if status:
        raise CorruptionError(_FUSED_ERRORS[status])


@njit(cache=True, nogil=True)
def _fused_decode(buf, D, width, aligned, out):
    n = len(buf)
    # factor count
    count = 0
    shift = 0
    p = 0
    while True:
        if p >= n or shift > 56:
            return 7
        b = np.int64(buf[p])
        p += 1
        count |= (b & 0x7F) << shift
        if b & 0x80:
            break
        shift += 7
    nbytes = count * 4 if aligned else (count * width + 7) // 8
    if p + nbytes > n:
        return 8
    op = p
    lp = p + nbytes
    acc = np.uint64(0)
    nbits = np.uint64(0)
    w = np.uint64(width)
    mask = (np.uint64(1) << w) - np.uint64(1)
    m = len(out)
    dn = len(D)
    q = 0
    for _ in range(count):
        if aligned:
            o = (np.int64(buf[op]) | (np.int64(buf[op + 1]) << 8)
                 | (np.int64(buf[op + 2]) << 16) | (np.int64(buf[op + 3]) << 24))
            op += 4
        else:
            while nbits < w:
                acc |= np.uint64(buf[op]) << nbits
                op += 1
                nbits += np.uint64(8)
            o = np.int64(acc & mask)
            acc >>= w
            nbits -= w
        L = 0
        shift = 0
        while True:
            if lp >= n or shift > 28:
                return 9
            b = np.int64(buf[lp])
            lp += 1
            L |= (b & 0x7F) << shift
            if b & 0x80:
                break
            shift += 7
        if L >= 1 << 32:
            return 9
        if L == 0:
            if q >= m:
                return 2
            if o > 255:
                return 6
            out[q] = o
            q += 1
        else:
            if o + L > dn:
                return 1
            if q + L > m:
                return 2
            for t in range(L):
                out[q + t] = D[o + t]
            q += L
    if lp != n:
        return 10
    if q != m:
        return 4
    return 0
