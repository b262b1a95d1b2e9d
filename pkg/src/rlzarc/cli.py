"""Command-line interface: ``rlz-arc {gen|build|extract|bench|stat|model|verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys

import numpy as np

from . import perfmodel
from .access import AccessMode, DEFAULT_FRAGMENT, DEFAULT_QUERIES, generate_workload, get_range, run_workload
from .archive import ManifestEntry, open_archive, write_archive
from .codecs import SchemeId, offset_width, parse_scheme_id
from .corpus import as_array, concatenate_files, generate_corpus
from .dictionary import build_dictionary, index_dictionary
from .errors import ArchiveIOError, CorruptionError, ParameterError
from .factorize import DEFAULT_MIN_LITERAL, Mode

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CORRUPT = 3
EXIT_IO = 4

_SUFFIX = {"": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30, "t": 1 << 40}
_SIZE_RE = re.compile(r"^\s*(\d+)\s*([kmgt]?)(i?b)?\s*$", re.IGNORECASE)


def parse_size(text) -> int:
    """Parse ``16k``, ``64M``, ``1GiB`` or a plain integer.  Suffixes are binary."""
    if isinstance(text, int):
        return text
    m = _SIZE_RE.match(str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}")
    return int(m.group(1)) * _SUFFIX[m.group(2).lower()]


def format_share(part: float, whole: float) -> str:
    return f"{100.0 * part / whole:.1f}%" if whole else "n/a"


def _emit(args, record: dict, out=None):
    out = out or sys.stdout
    if args.format == "json":
        out.write(json.dumps(record, indent=2, sort_keys=False) + "\n")
    else:
        for k, v in record.items():
            if isinstance(v, float):
                v = f"{v:.6g}"
            out.write(f"{k}: {v}\n")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    data = generate_corpus(args.size, seed=args.seed, novelty=args.novelty,
                           repeat_distance=args.repeat_distance)
    try:
        with open(args.out, "wb") as fh:
            fh.write(bytes(data))
    except OSError as exc:
        raise ArchiveIOError(f"cannot write {args.out}: {exc}") from exc
    _emit(args, {"path": args.out, "bytes": len(data), "seed": args.seed,
                 "novelty": args.novelty})


def cmd_build(args):
    corpus, spans = concatenate_files(args.inputs)
    if len(corpus) == 0:
        raise ParameterError("input is empty")
    sid = parse_scheme_id(args.scheme)
    dictionary = index = None
    if sid.needs_dictionary:
        dictionary = build_dictionary(corpus, args.dict_size, args.sample_size)
        if sid.uses_factors:
            index = index_dictionary(dictionary)
    manifest = [] if args.no_manifest else [ManifestEntry(*s) for s in spans]
    summary = write_archive(args.out, corpus, dictionary, index, sid, args.block_size,
                            manifest, args.min_literal)
    n = summary.source_length
    dict_len = len(dictionary) if dictionary is not None else 0
    _emit(args, {
        "archive": summary.path,
        "scheme": sid.name,
        "source_bytes": n,
        "archive_bytes": summary.file_size,
        "rate": summary.rate,
        "dict_share": format_share(dict_len, n),
        "table_share": format_share(summary.table_bytes, n),
        "blocks": summary.block_count,
        "documents": len(manifest),
    })


def cmd_extract(args):
    with open_archive(args.archive) as r:
        if args.doc is not None:
            try:
                e = r.document(args.doc)
            except KeyError:
                raise ParameterError(f"unknown document {args.doc!r}") from None
            start, length = e.start, e.length
        else:
            start = args.start
            length = args.length if args.length is not None else r.source_length - start
        data = get_range(r, start, length) if length else b""
    if args.out:
        try:
            with open(args.out, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise ArchiveIOError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def cmd_bench(args):
    with open_archive(args.archive) as r:
        w = generate_workload(args.mode, r.source_length, args.fragment, args.queries, args.seed)
        oracle = as_array(args.verify) if args.verify else None
        rep = run_workload(r, w, oracle, threads=args.threads)
    record = rep.to_dict()
    if args.out:
        try:
            with open(args.out, "w") as fh:
                _emit(args, record, fh)
        except OSError as exc:
            raise ArchiveIOError(f"cannot write {args.out}: {exc}") from exc
    _emit(args, record)


def archive_stats(r) -> dict:
    """Size breakdown and factor statistics of an open archive.

    Component sizes (header, payloads, dictionary record, block table,
    manifest) add up to the file size.  Factor statistics are recounted
    from the decoded streams of every block.
    """
    h = r.header
    payload = int(r.block_lengths.sum()) if r.block_count else 0
    header = int(r.block_offsets[0]) if r.block_count else h.dict_offset
    end = h.manifest_offset or r.file_size
    parts = {
        "header": header,
        "payloads": payload,
        "dictionary": h.table_offset - h.dict_offset,
        "table": end - h.table_offset,
        "manifest": r.file_size - end,
    }
    n = r.source_length
    stats = {
        "scheme": r.scheme.name,
        "source_bytes": n,
        "file_bytes": r.file_size,
        "rate": r.file_size / n if n else 0.0,
        "block_size": r.block_size,
        "blocks": r.block_count,
        "dictionary_length": r.dictionary_bytes,
        "sample_size": r.dictionary.sample_size if r.dictionary is not None else 0,
        "offset_bits": r.scheme.offset_bit_width if r.scheme.id.uses_factors else 0,
    }
    for k, v in parts.items():
        stats[f"{k}_bytes"] = v
    for k, v in parts.items():
        stats[f"{k}_rate"] = v / n if n else 0.0
    if r.scheme.id.uses_factors:
        entries = copies = copied = lit_entries = lit_bytes = 0
        for i in range(r.block_count):
            fs = r.decode_streams(i, r.fetch(i, i))
            L = fs.lengths.astype(np.int64)
            nz = L > 0
            entries += len(L)
            copies += int(nz.sum())
            copied += int(L.sum())
            lit_entries += int((~nz).sum())
            if fs.mode is Mode.THREE_STREAM:
                lit_bytes += len(fs.literals)
            else:
                lit_bytes += int((~nz).sum())
        stats.update({
            "factors": entries,
            "copy_factors": copies,
            "literal_entries": lit_entries,
            "literal_bytes": lit_bytes,
            "mean_factor_length": n / entries if entries else 0.0,
            "mean_copy_length": copied / copies if copies else 0.0,
        })
    return stats


def cmd_stat(args):
    with open_archive(args.archive) as r:
        _emit(args, archive_stats(r))


def model_report(profile, block_size, fragment, rate, decode_rate, batch_latency=None,
                 corpus_size=None, dict_size=None, sample_size=1024,
                 mean_factor_length=20.0) -> dict:
    """Predicted query rates and, given corpus and dictionary sizes, space arithmetic."""
    inp = perfmodel.ModelInputs(block_size, fragment, rate, decode_rate)
    qps, b = perfmodel.predict_random_qps(profile, inp)
    rec = {
        "media": profile.name,
        "block_size": block_size,
        "fragment_size": fragment,
        "compression_rate": rate,
        "random_qps": qps,
        "latency_s": b.latency,
        "transfer_s": b.transfer,
        "decode_s": b.decode,
        "decode_share": b.decode_share,
        "sequential_fragments_per_s": perfmodel.predict_sequential_rate(inp, profile),
        "sequential_decode_bound_per_s": perfmodel.predict_sequential_rate(inp),
    }
    if batch_latency is not None:
        rec["batch_latency_s"] = batch_latency
        rec["batch_qps"] = perfmodel.predict_batch_qps(profile, inp, batch_latency)
    if corpus_size is not None and dict_size is not None:
        count, interval = perfmodel.sampling_plan(corpus_size, dict_size, sample_size)
        est = perfmodel.rlz_payload_estimate(block_size, mean_factor_length, dict_size)
        blocks = -(-corpus_size // block_size)
        table = perfmodel.block_table_bytes(int(corpus_size * est.rate), blocks)
        rec.update({
            "samples": count,
            "sample_interval": interval,
            "offset_bits": offset_width(dict_size),
            "bits_per_factor": est.bits_per_factor,
            "block_payload_bytes": est.block_bytes,
            "payload_rate": est.rate,
            "table_entries": blocks,
            "table_pointer_bits": perfmodel.pointer_bits(int(corpus_size * est.rate)),
            "table_bytes": table,
            "dict_share": format_share(dict_size, corpus_size),
            "memory_footprint_bytes": perfmodel.memory_footprint(dict_size, table),
        })
    return rec


def cmd_model(args):
    if args.latency is not None or args.transfer is not None:
        base = perfmodel.media(args.media)
        profile = perfmodel.MediaProfile(
            args.latency / 1e3 if args.latency is not None else base.random_read_latency,
            args.transfer * perfmodel.MB if args.transfer is not None
            else base.sequential_transfer_rate, "custom")
    else:
        profile = perfmodel.media(args.media)
    batch = args.batch_latency / 1e3 if args.batch_latency is not None else None
    _emit(args, model_report(profile, args.block_size, args.fragment, args.rate,
                             args.decode_rate * perfmodel.MB, batch, args.corpus_size,
                             args.dict_size, args.sample_size, args.mean_factor_length))


def cmd_verify(args):
    with open_archive(args.archive) as r:
        if args.corpus:
            ref, _ = concatenate_files(args.corpus)
            if len(ref) != r.source_length:
                raise CorruptionError(
                    f"archive holds {r.source_length} bytes, corpus has {len(ref)}")
        else:
            ref = None
        for e in r.manifest:
            if e.start + e.length > r.source_length:
                raise CorruptionError(f"manifest entry {e.doc_id!r} is out of range")
        w = generate_workload(AccessMode.FULL, r.source_length, max(r.block_size, DEFAULT_FRAGMENT))
        rep = run_workload(r, w, ref)
    _emit(args, {"archive": args.archive, "blocks": r.block_count,
                 "bytes": rep.bytes_returned, "checked_against_corpus": ref is not None,
                 "sha256": rep.result_hash, "status": "ok"})


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlz-arc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def fmt(sp):
        sp.add_argument("--format", choices=("text", "json"), default="text")

    g = sub.add_parser("gen", help="write a seeded synthetic corpus")
    g.add_argument("--size", type=parse_size, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--novelty", type=float, default=0.1)
    g.add_argument("--repeat-distance", type=parse_size, default=None)
    g.add_argument("--out", required=True)
    fmt(g)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="compress input files into an archive")
    b.add_argument("inputs", nargs="+")
    b.add_argument("--out", required=True)
    b.add_argument("--scheme", default="RLZ_PV",
                   help="one of " + ", ".join(s.name for s in SchemeId))
    b.add_argument("--dict-size", type=parse_size, default=1 << 20)
    b.add_argument("--sample-size", type=parse_size, default=1024)
    b.add_argument("--block-size", type=parse_size, default=16 << 10)
    b.add_argument("--min-literal", type=int, default=DEFAULT_MIN_LITERAL)
    b.add_argument("--no-manifest", action="store_true")
    fmt(b)
    b.set_defaults(func=cmd_build)

    x = sub.add_parser("extract", help="write a byte range or document to stdout")
    x.add_argument("archive")
    sel = x.add_mutually_exclusive_group()
    sel.add_argument("--doc")
    sel.add_argument("--start", type=parse_size, default=0)
    x.add_argument("--length", type=parse_size)
    x.add_argument("--out")
    x.set_defaults(func=cmd_extract)

    be = sub.add_parser("bench", help="time a FULL, RANDOM or BATCH workload")
    be.add_argument("archive")
    be.add_argument("--mode", choices=[m.value for m in AccessMode], default="RANDOM",
                    type=str.upper)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--queries", type=int, default=DEFAULT_QUERIES)
    be.add_argument("--fragment", type=parse_size, default=DEFAULT_FRAGMENT)
    be.add_argument("--threads", type=int, default=1)
    be.add_argument("--verify", metavar="CORPUS", help="check every fragment against CORPUS")
    be.add_argument("--out", help="also write the report here")
    fmt(be)
    be.set_defaults(func=cmd_bench)

    s = sub.add_parser("stat", help="size breakdown and factor statistics")
    s.add_argument("archive")
    fmt(s)
    s.set_defaults(func=cmd_stat)

    m = sub.add_parser("model", help="predict query rates from the access-time model")
    m.add_argument("--media", choices=sorted(perfmodel.MEDIA), default="hdd")
    m.add_argument("--latency", type=float, help="random read latency in ms")
    m.add_argument("--transfer", type=float, help="sequential transfer rate in MB/s")
    m.add_argument("--block-size", type=parse_size, default=64 << 10)
    m.add_argument("--fragment", type=parse_size, default=DEFAULT_FRAGMENT)
    m.add_argument("--rate", type=float, default=0.22, help="compression rate")
    m.add_argument("--decode-rate", type=float, default=300.0, help="decode speed in MB/s")
    m.add_argument("--batch-latency", type=float, help="amortized seek in ms for sorted batches")
    m.add_argument("--corpus-size", type=parse_size)
    m.add_argument("--dict-size", type=parse_size)
    m.add_argument("--sample-size", type=parse_size, default=1024)
    m.add_argument("--mean-factor-length", type=float, default=20.0)
    fmt(m)
    m.set_defaults(func=cmd_model)

    v = sub.add_parser("verify", help="decode everything and check consistency")
    v.add_argument("archive")
    v.add_argument("--corpus", nargs="+", help="original input files, in build order")
    fmt(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CorruptionError as exc:
        print(f"rlz-arc: corrupt data: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ArchiveIOError, OSError) as exc:
        print(f"rlz-arc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, ValueError) as exc:
        print(f"rlz-arc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
