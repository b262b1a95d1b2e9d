"""Acceptance criteria, each reported as one pass/fail line in the terminal summary."""

import time
import warnings

import numpy as np
import pytest

from acceptance_log import record
from oracles import find_parse
from rlzarc.access import generate_workload, get_range, run_workload
from rlzarc.archive import factorize_corpus, locate_blocks, open_archive, write_archive
from rlzarc.cli import model_report
from rlzarc.codecs import SchemeId, offset_width
from rlzarc.corpus import generate_corpus
from rlzarc.dictionary import build_dictionary, index_dictionary
from rlzarc.factorize import Mode, factorize_block
from rlzarc.perfmodel import (
    GiB, KiB, MB, MEDIA, MiB, ModelInputs, block_table_bytes, predict_batch_qps,
    predict_random_qps, predict_sequential_rate, rlz_payload_estimate, sampling_plan,
)

FACTOR_SCHEMES = [SchemeId.RLZ_UV, SchemeId.RLZ_PV, SchemeId.RLZ_ZZ, SchemeId.RLZ_ZZ_PRIMED,
                  SchemeId.RLZ_ZZZ]
PLAIN_SCHEMES = [SchemeId.COPY, SchemeId.DEF_BLOCK, SchemeId.FASTLZ_BLOCK]


def within(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def _quiet_dictionary(corpus, size, sample=1024):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_dictionary(corpus, size, sample)


@pytest.fixture(scope="module")
def big(tmp_path_factory):
    """Scratch directory and the 64 MiB seed-42 corpus."""
    root = tmp_path_factory.mktemp("accept")
    corpus = generate_corpus(64 * MiB, seed=42)
    return root, corpus


# ---------------------------------------------------------------------------
# 2. factorization oracle


def test_criterion_2_factorization_oracle():
    rng = np.random.default_rng(2)
    mismatches = 0
    for trial in range(1000):
        sigma = int(rng.choice([2, 3, 4, 16, 256]))
        D = rng.integers(0, sigma, int(rng.integers(1, 4097)), dtype=np.uint8).tobytes()
        if trial % 2:
            # blocks stitched from dictionary pieces plus noise give long matches
            parts = []
            while sum(map(len, parts)) < 512:
                a = int(rng.integers(0, len(D)))
                parts.append(D[a:a + int(rng.integers(1, 80))])
                parts.append(rng.integers(0, sigma, int(rng.integers(0, 3)), dtype=np.uint8).tobytes())
            block = b"".join(parts)[:int(rng.integers(1, 513))]
        else:
            block = rng.integers(0, sigma, int(rng.integers(1, 513)), dtype=np.uint8).tobytes()
        d = _quiet_dictionary(D, len(D), len(D))
        fs = factorize_block(index_dictionary(d), block, Mode.INTERLEAVED)
        got = list(zip(fs.offsets.tolist(), fs.lengths.tolist()))
        mismatches += got != find_parse(D, block)
    ok = record("2 (factorization oracle)", mismatches == 0,
                f"{1000 - mismatches}/1000 random instances match the brute-force parse")
    assert ok


# ---------------------------------------------------------------------------
# 3. worked space arithmetic


def test_criterion_3_worked_arithmetic():
    rep = model_report(MEDIA["hdd"], 16 * KiB, 16 * KiB, 0.22, 300 * MB,
                       corpus_size=64 * GiB, dict_size=64 * MiB, sample_size=1024,
                       mean_factor_length=20)
    est = rlz_payload_estimate(16 * KiB, 20, 64 * MiB)
    table = block_table_bytes(16 * GiB, 4_194_304)
    checks = {
        "65,536 samples every 1,048,576 bytes":
            (rep["samples"], rep["sample_interval"]) == (65_536, 1_048_576)
            and sampling_plan(64 * GiB, 64 * MiB, 1024) == (65_536, 1_048_576),
        "26-bit offsets": offset_width(64 * MiB) == 26 == rep["offset_bits"],
        "34 bits per factor": est.bits_per_factor == 34 == rep["bits_per_factor"],
        f"~3.4 KiB per block ({est.block_bytes / KiB:.3f} KiB)":
            round(est.block_bytes / KiB, 1) == 3.4,
        f"rate 22% +/- 0.5 ({100 * est.rate:.2f}%)": abs(100 * est.rate - 22) <= 0.5,
        f"table ~17 MiB +/- 5% ({table / MiB:.2f} MiB)": within(table / MiB, 17, 0.05),
    }
    failed = [k for k, v in checks.items() if not v]
    detail = "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert record("3 (worked arithmetic)", not failed, detail), failed


# ---------------------------------------------------------------------------
# 4. throughput model


def test_criterion_4_throughput_model():
    hdd, ssd = MEDIA["hdd"], MEDIA["ssd"]
    q64, b64 = predict_random_qps(hdd, ModelInputs(64 * KiB, 16 * KiB, 0.22, 260 * MB))
    q512, _ = predict_random_qps(hdd, ModelInputs(512 * KiB, 16 * KiB, 0.25, 300 * MB))
    qssd, bssd = predict_random_qps(ssd, ModelInputs(64 * KiB, 16 * KiB, 0.22, 260 * MB))
    batch = predict_batch_qps(hdd, ModelInputs(64 * KiB, 16 * KiB, 0.22, 300 * MB), 4.5e-3)
    seq16 = predict_sequential_rate(ModelInputs(16 * KiB, 16 * KiB, 0.22, 300 * MB))
    seq64 = predict_sequential_rate(ModelInputs(64 * KiB, 64 * KiB, 0.22, 300 * MB))
    checks = {
        f"HDD/64K {q64:.1f} qps ~110": within(q64, 110, 0.15) and b64.decode_share < 0.03,
        f"HDD/512K {q512:.1f} qps ~90": within(q512, 90, 0.15),
        f"SSD/64K {qssd:.0f}/s ~2900": within(qssd, 2900, 0.15),
        f"SSD decode share {100 * bssd.decode_share:.1f}% ~60+/-10":
            abs(bssd.decode_share - 0.60) <= 0.10,
        f"batch {batch:.1f} qps ~200": within(batch, 200, 0.15),
        f"sequential 16K {seq16:.0f}/s ~20000":
            within(seq16, 20_000, 0.15) and seq16 == 300 * MB / (16 * KiB),
        f"sequential 64K {seq64:.0f}/s ~5000":
            within(seq64, 5_000, 0.15) and seq64 == 300 * MB / (64 * KiB),
    }
    failed = [k for k, v in checks.items() if not v]
    detail = "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert record("4 (throughput model)", not failed, detail), failed


# ---------------------------------------------------------------------------
# 5. trend properties on the 64 MiB corpus


def test_criterion_5_trends(big):
    root, corpus = big
    sizes = {}
    payloads = {}
    for ds in (1 * MiB, 4 * MiB, 16 * MiB, 64 * MiB):
        d = _quiet_dictionary(corpus, ds)
        idx = index_dictionary(d)
        f = factorize_corpus(idx, corpus, 16 * KiB, Mode.INTERLEAVED, 4)
        s = write_archive(root / f"pv{ds >> 20}.rlz", corpus, d, idx, SchemeId.RLZ_PV,
                          16 * KiB, factors=f)
        sizes[ds], payloads[ds] = s.file_size, s.payload_bytes
        if ds == 1 * MiB:
            one = {"PV": s.file_size}
            for sid in (SchemeId.RLZ_UV, SchemeId.RLZ_ZZ, SchemeId.DEF_BLOCK_PRIMED):
                one[sid.name] = write_archive(root / f"{sid.name}.rlz", corpus, d, idx, sid,
                                              16 * KiB, factors=f).file_size
            one["RLZ_ZZZ"] = write_archive(root / "zzz.rlz", corpus, d, idx, SchemeId.RLZ_ZZZ,
                                           16 * KiB, min_literal=4,
                                           factors=f.regroup(corpus, 4)).file_size
            one["DEF_BLOCK"] = write_archive(root / "def.rlz", corpus, scheme=SchemeId.DEF_BLOCK,
                                             block_size=16 * KiB).file_size
        del idx, f
    order = sorted(payloads)
    a = all(payloads[x] >= payloads[y] for x, y in zip(order, order[1:]))
    rates = ", ".join(f"{ds >> 20}M payload {payloads[ds] / len(corpus):.4f} "
                      f"total {sizes[ds] / len(corpus):.4f}" for ds in order)
    checks = {
        f"(a) RLZ_PV non-increasing over dict sizes [{rates}]": a,
        f"(b) RLZ_PV {one['PV']} <= RLZ_UV {one['RLZ_UV']}": one["PV"] <= one["RLZ_UV"],
        f"(c) RLZ_ZZZ {one['RLZ_ZZZ']} <= RLZ_ZZ {one['RLZ_ZZ']}":
            one["RLZ_ZZZ"] <= one["RLZ_ZZ"],
        f"(d) DEF_BLOCK_PRIMED {one['DEF_BLOCK_PRIMED']} <= DEF_BLOCK {one['DEF_BLOCK']}":
            one["DEF_BLOCK_PRIMED"] <= one["DEF_BLOCK"],
    }
    failed = [k for k, v in checks.items() if not v]
    detail = "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert record("5 (trend properties)", not failed, detail), failed


# ---------------------------------------------------------------------------
# 6. workload correctness


def test_criterion_6_workloads(big):
    root, corpus = big
    path = root / "pv1.rlz"
    if not path.exists():
        d = _quiet_dictionary(corpus, 1 * MiB)
        write_archive(path, corpus, d, index_dictionary(d), SchemeId.RLZ_PV, 16 * KiB)
    with open_archive(path) as r:
        rnd = generate_workload("RANDOM", len(corpus), seed=6)
        bat = generate_workload("BATCH", len(corpus), seed=6)
        rr = run_workload(r, rnd, corpus)
        br = run_workload(r, bat, corpus)
        expect = 0
        for q in rnd.queries.tolist():
            first, last, _ = locate_blocks(r.header, q, rnd.fragment_length(q))
            expect += last - first + 1
    checks = {
        "BATCH and RANDOM multisets equal": rr.multiset_hash == br.multiset_hash,
        f"blocks fetched {rr.blocks_fetched}/{br.blocks_fetched} == locate_blocks {expect}":
            rr.blocks_fetched == br.blocks_fetched == expect,
        "10,000 queries verified": rr.query_count == 10_000 and rr.verified and br.verified,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert record("6 (workload correctness)", not failed, detail), failed


# ---------------------------------------------------------------------------
# 7. measured throughput


def test_criterion_7_measured_throughput(big):
    root, corpus = big
    path = root / "pv1.rlz"
    if not path.exists():
        d = _quiet_dictionary(corpus, 1 * MiB)
        write_archive(path, corpus, d, index_dictionary(d), SchemeId.RLZ_PV, 16 * KiB)
    with open_archive(path) as r:
        full_w = generate_workload("FULL", len(corpus))
        run_workload(r, full_w)  # warm the page cache
        full = max((run_workload(r, full_w) for _ in range(3)),
                   key=lambda rep: rep.fragments_per_sec)
        rand = run_workload(r, generate_workload("RANDOM", len(corpus), seed=7))
    mibs = full.bytes_returned / full.wall_time / MiB
    checks = {
        f"FULL {mibs:.1f} MiB/s >= 100": mibs >= 100,
        f"RANDOM {rand.fragments_per_sec:.0f} <= FULL {full.fragments_per_sec:.0f} fragments/s":
            rand.fragments_per_sec <= full.fragments_per_sec,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert record("7 (measured throughput)", not failed, detail), failed


# ---------------------------------------------------------------------------
# 1. round trip over the full grid, then its runtime budget

GRID_SEEDS = (1, 2, 3, 4, 5)
GRID_SIZES = (1 * MiB, 16 * MiB, 64 * MiB)
GRID_NOVELTY = (0.01, 0.10, 0.50)
GRID_BLOCKS = (16 * KiB, 64 * KiB, 256 * KiB)
GRID_DICTS = (64 * KiB, 1 * MiB, 16 * MiB)
RUNTIME_BUDGET = 600.0


def _extracts_exactly(path, corpus):
    with open_archive(path) as r:
        out = get_range(r, 0, r.source_length)
    return out == corpus


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    """Write and fully extract every archive in the grid.

    Dictionary-free schemes do not depend on the dictionary size, so they
    are built once per corpus and block size.  One interleaved parse per
    (dictionary, block size) serves every factor scheme; the three-stream
    factors are regrouped from it.
    """
    root = tmp_path_factory.mktemp("grid")
    path = root / "a.rlz"
    failures = []
    archives = 0
    t0 = time.perf_counter()
    for seed in GRID_SEEDS:
        for size in GRID_SIZES:
            for novelty in GRID_NOVELTY:
                corpus = generate_corpus(size, seed=seed, novelty=novelty)
                tag = (seed, size >> 20, novelty)
                for bs in GRID_BLOCKS:
                    for sid in PLAIN_SCHEMES:
                        write_archive(path, corpus, scheme=sid, block_size=bs)
                        archives += 1
                        if not _extracts_exactly(path, corpus):
                            failures.append((*tag, sid.name, bs, 0))
                for ds in GRID_DICTS:
                    d = _quiet_dictionary(corpus, ds)
                    idx = index_dictionary(d)
                    for bs in GRID_BLOCKS:
                        inter = factorize_corpus(idx, corpus, bs, Mode.INTERLEAVED, 4)
                        three = inter.regroup(corpus, 4)
                        for sid in FACTOR_SCHEMES + [SchemeId.DEF_BLOCK_PRIMED]:
                            f = three if sid is SchemeId.RLZ_ZZZ else inter
                            write_archive(path, corpus, d, idx, sid, bs,
                                          factors=f if sid.uses_factors else None)
                            archives += 1
                            if not _extracts_exactly(path, corpus):
                                failures.append((*tag, sid.name, bs, ds))
                    del idx
    return failures, archives, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_1_round_trip(grid):
    failures, archives, _ = grid
    ok = record("1 (round-trip identity)", not failures,
                f"{archives - len(failures)}/{archives} archives extract byte-exactly "
                f"over 45 corpora x 9 schemes x 3 block sizes x 3 dictionary sizes")
    assert ok, failures[:10]


@pytest.mark.slow
def test_criterion_1_runtime_budget(grid):
    _, archives, elapsed = grid
    ok = record("1 (runtime budget)", elapsed < RUNTIME_BUDGET,
                f"grid took {elapsed:.0f} s for {archives} archives, budget {RUNTIME_BUDGET:.0f} s")
    assert ok
