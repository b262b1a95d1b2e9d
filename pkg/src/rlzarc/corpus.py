"""Corpus input helpers and a seeded generator of repetitive text."""

from __future__ import annotations

import io
import os

import numpy as np

from .errors import ArchiveIOError, ParameterError


def as_array(src) -> np.ndarray:
    """View ``src`` as a read-only uint8 array.

    Accepts bytes-like objects, numpy arrays, paths, and binary file objects.
    Paths are memory-mapped rather than read.
    """
    if isinstance(src, np.ndarray):
        if src.dtype != np.uint8:
            raise ParameterError("corpus arrays must be uint8")
        return src
    if isinstance(src, (bytes, bytearray, memoryview)):
        return np.frombuffer(src, dtype=np.uint8)
    if isinstance(src, (str, os.PathLike)):
        try:
            if os.path.getsize(src) == 0:
                return np.zeros(0, dtype=np.uint8)
            return np.memmap(src, dtype=np.uint8, mode="r")
        except OSError as exc:
            raise ArchiveIOError(f"cannot read corpus {src}: {exc}") from exc
    if isinstance(src, io.IOBase) or hasattr(src, "read"):
        return np.frombuffer(src.read(), dtype=np.uint8)
    raise ParameterError(f"unsupported corpus source: {type(src).__name__}")


def concatenate_files(paths) -> tuple[np.ndarray, list[tuple[str, int, int]]]:
    """Concatenate files in order; also return ``(name, start, length)`` per file."""
    parts = []
    spans = []
    pos = 0
    for p in paths:
        try:
            with open(p, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise ArchiveIOError(f"cannot read {p}: {exc}") from exc
        parts.append(data)
        spans.append((str(p), pos, len(data)))
        pos += len(data)
    return np.frombuffer(b"".join(parts), dtype=np.uint8), spans


_LETTERS = np.frombuffer(b"etaoinshrdlcumwfgypbvkjxqz", dtype=np.uint8)
_LETTER_P = np.array([12.7, 9.1, 8.2, 7.5, 7.0, 6.7, 6.3, 6.1, 6.0, 4.3, 4.0, 2.8, 2.8,
                      2.4, 2.4, 2.2, 2.0, 2.0, 1.9, 1.5, 1.0, 0.8, 0.2, 0.2, 0.1, 0.1])


def _vocabulary(rng, size):
    lengths = rng.integers(2, 11, size=size)
    letters = rng.choice(_LETTERS, size=int(lengths.sum()), p=_LETTER_P / _LETTER_P.sum())
    cuts = np.cumsum(lengths)[:-1]
    return [w.tobytes() for w in np.split(letters, cuts)]


def _novel_text(rng, vocab, weights, nbytes):
    out = []
    total = 0
    while total < nbytes:
        ids = rng.choice(len(vocab), size=max(1024, (nbytes - total) // 5), p=weights)
        seps = rng.random(len(ids))
        words = [vocab[i] + (b"\n" if u < 0.02 else b", " if u < 0.06 else b" ")
                 for i, u in zip(ids.tolist(), seps.tolist())]
        chunk = b"".join(words)
        out.append(chunk)
        total += len(chunk)
    return np.frombuffer(b"".join(out)[:nbytes], dtype=np.uint8)


def generate_corpus(size: int, seed: int = 42, novelty: float = 0.1,
                    repeat_distance: int | None = None, segment: int = 256,
                    vocabulary: int = 20000) -> bytes:
    """Generate ``size`` bytes of word-like text with long-range repetition.

    The output is a sequence of segments with geometrically distributed
    lengths (mean ``segment``).  A fraction ``novelty`` of segments is
    fresh text drawn from a Zipf-weighted vocabulary; the remainder copy an
    earlier stretch of the output from at most ``repeat_distance`` bytes
    back (anywhere earlier when None).
    """
    if size < 0:
        raise ParameterError("size must be non-negative")
    if not 0.0 <= novelty <= 1.0:
        raise ParameterError("novelty must lie in [0, 1]")
    if repeat_distance is not None and repeat_distance < 1:
        raise ParameterError("repeat_distance must be positive")
    rng = np.random.default_rng(seed)
    vocab = _vocabulary(rng, vocabulary)
    weights = 1.0 / (np.arange(len(vocab)) + 2.7)
    weights /= weights.sum()

    lead = min(size, 4 * segment)
    novel_need = lead + int(size * novelty * 1.25) + 8 * segment
    novel = _novel_text(rng, vocab, weights, novel_need)

    out = np.empty(size, dtype=np.uint8)
    out[:lead] = novel[:lead]
    npos = lead
    pos = lead
    # Draw segment parameters in bulk; the loop only slices.
    batch = max(16, size // segment + 16)
    lens = rng.geometric(1.0 / segment, size=batch)
    kinds = rng.random(batch)
    backs = rng.random(batch)
    k = 0
    while pos < size:
        if k == batch:
            lens = rng.geometric(1.0 / segment, size=batch)
            kinds = rng.random(batch)
            backs = rng.random(batch)
            k = 0
        n = min(int(lens[k]), size - pos)
        if kinds[k] < novelty:
            if npos + n > len(novel):
                novel = _novel_text(rng, vocab, weights, max(n, 1 << 20))
                npos = 0
            out[pos:pos + n] = novel[npos:npos + n]
            npos += n
        else:
            n = min(n, pos)
            reach = pos if repeat_distance is None else min(pos, repeat_distance)
            reach = max(reach, n)
            dist = n + int(backs[k] * (reach - n + 1))
            dist = min(dist, pos)
            src = pos - dist
            out[pos:pos + n] = out[src:src + n]
        pos += n
        k += 1
    return out.tobytes()
