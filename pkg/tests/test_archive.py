import hashlib
import os

import pytest

from rlzarc.archive import (
    HEADER_SIZE, ArchiveHeader, ManifestEntry, block_count_for, check_block_size,
    factorize_corpus, locate_blocks, open_archive, write_archive,
)
from rlzarc.codecs import SchemeId
from rlzarc.dictionary import build_dictionary, index_dictionary
from rlzarc.errors import ArchiveIOError, CorruptionError, ParameterError
from rlzarc.factorize import Mode
from rlzarc.perfmodel import MiB, block_table_bytes, memory_footprint

GiB = 1 << 30


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _header(n, bs=16384):
    return ArchiveHeader(SchemeId.COPY, bs, n, block_count_for(n, bs), HEADER_SIZE, HEADER_SIZE)


@pytest.mark.parametrize("sid", list(SchemeId))
@pytest.mark.parametrize("bs", [4096, 16384])
def test_round_trip_all_schemes(tmp_path, corpus, sid, bs):
    data = corpus[: 300_000 + 123]  # trailing short block
    d = build_dictionary(data, 16 << 10, 1024)
    idx = index_dictionary(d)
    path = tmp_path / "a.rlz"
    s = write_archive(path, data, d, idx, sid, bs)
    assert s.file_size == os.path.getsize(path)
    with open_archive(path) as r:
        out = b"".join(r.read_block(i) for i in range(r.block_count))
        assert out == data
        assert r.block_count == block_count_for(len(data), bs)


def test_block_count_division():
    assert block_count_for(64 * MiB, 16384) == 4096
    assert block_count_for(16 * GiB, 16384) == 1_048_576
    assert block_count_for(1, 16384) == 1


def test_large_collection_table_and_footprint():
    table = block_table_bytes(16 * GiB, 4_194_304)
    assert table == 4_194_304 * 34 / 8
    assert abs(table / MiB - 17) / 17 < 0.05
    assert abs(memory_footprint(64 * MiB, 17 * MiB) / MiB - 81) < 1e-9


@pytest.mark.parametrize("start, length, expect", [
    (0, 16384, (0, 0, 0)),
    (16385, 16384, (1, 2, 1)),
    (100 * 16384 - 1, 1, (99, 99, 16383)),
])
def test_locate_blocks(start, length, expect):
    assert locate_blocks(_header(100 * 16384), start, length) == expect


def test_locate_blocks_out_of_range():
    h = _header(1000)
    for start, length in [(-1, 5), (999, 2), (0, 0)]:
        with pytest.raises(ParameterError):
            locate_blocks(h, start, length)


def test_block_size_validation():
    for bad in (1000, 2048, 3 << 12):
        with pytest.raises(ParameterError):
            check_block_size(bad)
    check_block_size(256 << 10)


def test_deterministic(tmp_path, corpus, small_dict):
    d, idx = small_dict
    a, b = tmp_path / "a", tmp_path / "b"
    write_archive(a, corpus, d, idx, SchemeId.RLZ_ZZ_PRIMED, 16384)
    write_archive(b, corpus, d, idx, SchemeId.RLZ_ZZ_PRIMED, 16384)
    assert _sha(a) == _sha(b)


def test_copy_archive(tmp_path, corpus):
    path = tmp_path / "c.rlz"
    s = write_archive(path, corpus, scheme=SchemeId.COPY)
    assert s.file_size >= len(corpus)
    with open_archive(path) as r:
        assert r.dictionary is None
        assert r.dictionary_bytes == 0
        assert r.read_block(3) == corpus[3 * 16384:4 * 16384]


def test_size_accounting(tmp_path, corpus, small_dict):
    d, idx = small_dict
    path = tmp_path / "p.rlz"
    s = write_archive(path, corpus, d, idx, SchemeId.RLZ_PV, 16384,
                      [ManifestEntry("x", 0, 10)])
    assert (s.header_bytes + s.payload_bytes + s.dictionary_bytes + s.table_bytes
            + s.manifest_bytes) == s.file_size
    assert s.rate == s.file_size / len(corpus)
    with open_archive(path) as r:
        assert r.footprint == len(d) + 12 * r.block_count
        assert abs(r.footprint - (len(d) + r.block_count * 12)) <= 0.01 * r.footprint


def test_manifest(tmp_path, corpus, small_dict):
    d, idx = small_dict
    path = tmp_path / "m.rlz"
    docs = [ManifestEntry("first", 0, 5000), ManifestEntry("second", 5000, 70_000)]
    write_archive(path, corpus, d, idx, SchemeId.RLZ_UV, 16384, docs)
    with open_archive(path) as r:
        assert r.manifest == docs
        assert r.document("second") == docs[1]
        with pytest.raises(KeyError):
            r.document("third")


def test_manifest_validation(tmp_path, corpus, small_dict):
    d, idx = small_dict
    with pytest.raises(ParameterError):
        write_archive(tmp_path / "x", corpus, d, idx, SchemeId.RLZ_PV, 16384,
                      [ManifestEntry("a", 10, 10), ManifestEntry("b", 5, 1)])


def test_precomputed_factors_reused(tmp_path, corpus, small_dict):
    d, idx = small_dict
    f = factorize_corpus(idx, corpus, 16384, Mode.INTERLEAVED, 4)
    write_archive(tmp_path / "a", corpus, d, idx, SchemeId.RLZ_PV, 16384)
    write_archive(tmp_path / "b", corpus, d, idx, SchemeId.RLZ_PV, 16384, factors=f)
    assert _sha(tmp_path / "a") == _sha(tmp_path / "b")
    with pytest.raises(ParameterError):
        write_archive(tmp_path / "c", corpus, d, idx, SchemeId.RLZ_PV, 65536, factors=f)


def test_dictionary_required(tmp_path, corpus):
    with pytest.raises(ParameterError):
        write_archive(tmp_path / "x", corpus, scheme=SchemeId.RLZ_PV)


@pytest.fixture
def built(tmp_path, corpus, small_dict):
    d, idx = small_dict
    path = tmp_path / "t.rlz"
    write_archive(path, corpus, d, idx, SchemeId.RLZ_PV, 16384)
    return path


def test_truncated_archive(built):
    raw = open(built, "rb").read()
    for cut in (10, HEADER_SIZE + 100, len(raw) - 20):
        with open(built, "wb") as fh:
            fh.write(raw[:cut])
        with pytest.raises(CorruptionError):
            open_archive(built)


def test_bad_magic(built):
    raw = bytearray(open(built, "rb").read())
    raw[0:4] = b"NOPE"
    open(built, "wb").write(raw)
    with pytest.raises(CorruptionError, match="magic"):
        open_archive(built)


def test_header_checksum(built):
    raw = bytearray(open(built, "rb").read())
    raw[20] ^= 1
    open(built, "wb").write(raw)
    with pytest.raises(CorruptionError):
        open_archive(built)


def test_damaged_payload_detected(built, corpus):
    raw = bytearray(open(built, "rb").read())
    with open_archive(built) as r:
        off = int(r.block_offsets[5])
    raw[off] ^= 0xFF  # factor count prelude
    open(built, "wb").write(raw)
    with open_archive(built) as r:
        with pytest.raises(CorruptionError):
            r.read_block(5)
        assert r.read_block(4) == corpus[4 * 16384:5 * 16384]


def test_missing_file(tmp_path):
    with pytest.raises(ArchiveIOError):
        open_archive(tmp_path / "absent.rlz")


def test_counters(built):
    with open_archive(built) as r:
        r.fetch(2, 4)
        assert r.counters.blocks_fetched == 3
        assert r.counters.reads == 1


def test_regrouped_factors_match_direct(tmp_path, corpus, small_dict):
    d, idx = small_dict
    inter = factorize_corpus(idx, corpus, 16384, Mode.INTERLEAVED, 4)
    direct = factorize_corpus(idx, corpus, 16384, Mode.THREE_STREAM, 4)
    write_archive(tmp_path / "a", corpus, d, idx, SchemeId.RLZ_ZZZ, 16384, factors=direct)
    write_archive(tmp_path / "b", corpus, d, idx, SchemeId.RLZ_ZZZ, 16384,
                  factors=inter.regroup(corpus, 4))
    assert _sha(tmp_path / "a") == _sha(tmp_path / "b")
    with pytest.raises(ParameterError):
        direct.regroup(corpus)
