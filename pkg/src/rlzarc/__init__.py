"""Blocked relative Lempel-Ziv archives with random-access reads."""

from .access import (AccessMode, ThroughputReport, Workload, generate_workload, get_range,
                     run_workload)
from .archive import (ArchiveHeader, ArchiveReader, ManifestEntry, WriteSummary,
                      factorize_corpus, locate_blocks, open_archive, write_archive)
from .codecs import Scheme, SchemeId, decode_block, encode_block
from .corpus import concatenate_files, generate_corpus
from .dictionary import (Dictionary, DictionaryIndex, build_dictionary, index_dictionary,
                         longest_match, sampling_plan)
from .errors import ArchiveIOError, CorruptionError, ParameterError, RLZError
from .factorize import FactorStreams, Mode, defactorize, factorize_block

__version__ = "0.1.0"

__all__ = [
    "AccessMode", "ArchiveHeader", "ArchiveIOError", "ArchiveReader", "CorruptionError",
    "Dictionary", "DictionaryIndex", "FactorStreams", "ManifestEntry", "Mode",
    "ParameterError", "RLZError", "Scheme", "SchemeId", "ThroughputReport", "Workload",
    "WriteSummary", "build_dictionary", "concatenate_files", "decode_block", "defactorize",
    "encode_block", "factorize_block", "factorize_corpus", "generate_corpus",
    "generate_workload", "get_range", "index_dictionary", "locate_blocks", "longest_match",
    "open_archive", "run_workload", "sampling_plan", "write_archive",
]
