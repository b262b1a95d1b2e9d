"""Analytical access-time model for compressed block archives.

Rates are in decimal units (1 MB/s = 1e6 bytes per second) to match
device data sheets; sizes are in bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .codecs import offset_width
from .dictionary import sampling_plan  # noqa: F401  (re-exported)
from .errors import ParameterError

MB = 1_000_000
KiB = 1024
MiB = 1024 * KiB
GiB = 1024 * MiB


@dataclass(frozen=True)
class MediaProfile:
    random_read_latency: float
    sequential_transfer_rate: float
    name: str = "custom"

    def __post_init__(self):
        if self.random_read_latency <= 0 or self.sequential_transfer_rate <= 0:
            raise ParameterError("latency and transfer rate must be positive")


MEDIA = {
    "hdd": MediaProfile(8.5e-3, 150 * MB, "hdd"),
    "ssd": MediaProfile(0.12e-3, 1000 * MB, "ssd"),
}


def media(name_or_profile) -> MediaProfile:
    if isinstance(name_or_profile, MediaProfile):
        return name_or_profile
    try:
        return MEDIA[str(name_or_profile).lower()]
    except KeyError:
        raise ParameterError(f"unknown media preset {name_or_profile!r}") from None


@dataclass(frozen=True)
class ModelInputs:
    block_size: int
    fragment_size: int = 16 * KiB
    compression_rate: float = 0.22
    decode_rate: float = 300 * MB

    def __post_init__(self):
        if not 0 < self.compression_rate <= 1:
            raise ParameterError("compression rate must be in (0, 1]")
        if self.fragment_size < 1 or self.block_size < 1 or self.decode_rate <= 0:
            raise ParameterError("sizes and decode rate must be positive")


@dataclass(frozen=True)
class Breakdown:
    latency: float
    transfer: float
    decode: float

    @property
    def total(self) -> float:
        return self.latency + self.transfer + self.decode

    @property
    def decode_share(self) -> float:
        return self.decode / self.total


def expected_touched_blocks(block_size: int, fragment_size: int) -> int:
    """Blocks spanned by a fragment starting mid-block, the expected start offset."""
    return math.ceil((block_size / 2 + fragment_size) / block_size)


def query_time(latency: float, m: MediaProfile, inp: ModelInputs) -> Breakdown:
    bs = inp.block_size
    touched = expected_touched_blocks(bs, inp.fragment_size)
    transfer = touched * bs * inp.compression_rate / m.sequential_transfer_rate
    # Decoding runs from the first touched block's start to the fragment end.
    decode = (bs / 2 + inp.fragment_size) / inp.decode_rate
    return Breakdown(latency, transfer, decode)


def predict_random_qps(m: MediaProfile, inp: ModelInputs) -> tuple[float, Breakdown]:
    """One seek per query, then transfer of the touched blocks, then decode."""
    b = query_time(m.random_read_latency, m, inp)
    return 1.0 / b.total, b


def predict_batch_qps(m: MediaProfile, inp: ModelInputs, batch_latency: float) -> float:
    """Same as the random model with the seek cost lowered by address-sorted batching."""
    if not 0 <= batch_latency <= m.random_read_latency:
        raise ParameterError("batch latency must lie in [0, random read latency]")
    return 1.0 / query_time(batch_latency, m, inp).total


def predict_sequential_rate(inp: ModelInputs, m: MediaProfile | None = None) -> float:
    """Fragments per second for a full sequential decode.

    Seeks amortize to zero.  Output is decode-bound unless moving the
    compressed bytes takes longer than decoding them.
    """
    decode = inp.fragment_size / inp.decode_rate
    if m is None:
        return 1.0 / decode
    transfer = inp.fragment_size * inp.compression_rate / m.sequential_transfer_rate
    return 1.0 / max(decode, transfer)


# ---------------------------------------------------------------------------
# space arithmetic


@dataclass(frozen=True)
class PayloadEstimate:
    factors_per_block: float
    bits_per_factor: int
    block_bytes: float
    rate: float


def rlz_payload_estimate(block_size: int, mean_factor_length: float, dict_size: int,
                         length_bytes: int = 1) -> PayloadEstimate:
    """Expected packed-offset payload for a block, ignoring the prelude."""
    factors = block_size / mean_factor_length
    bits = offset_width(dict_size) + 8 * length_bytes
    size = factors * bits / 8
    return PayloadEstimate(factors, bits, size, size / block_size)


def pointer_bits(addressable_bytes: int) -> int:
    return max(1, (addressable_bytes - 1).bit_length())


def block_table_bytes(compressed_bytes: int, block_count: int) -> float:
    """Size of a bit-packed block index addressing ``compressed_bytes``."""
    return block_count * pointer_bits(compressed_bytes) / 8


def memory_footprint(dict_size: int, table_bytes: float) -> float:
    return dict_size + table_bytes
