"""Constant-composition distribution matching (CCDM).

A CCDM maps ``k`` uniform bits to a block of ``n`` amplitude indices that
always contains every amplitude exactly ``counts[a]`` times. The encoder is an
arithmetic coder run with exact integer arithmetic: the ``k`` input bits define
the point ``b / 2**k`` in ``[0, 1)``, and the output is the sequence whose
lexicographic interval ``[r / M, (r + 1) / M)`` contains that point, where
``M`` is the number of sequences of the given composition and ``r`` the rank.
Because ``M >= 2**k`` the map ``b -> r = floor(b * M / 2**k)`` is strictly
increasing, hence injective and order preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "TargetDistribution",
    "Composition",
    "DmCodebookInfo",
    "AmplitudeSequence",
    "NonCodewordError",
    "derive_composition",
    "codebook_info",
    "multinomial",
    "ccdm_encode",
    "ccdm_decode",
    "ccdm_encode_index",
    "ccdm_decode_index",
    "build_sequence",
    "PAPER_DISTRIBUTION",
]


class NonCodewordError(ValueError):
    """Raised when a block of the right composition is not in the encoder image."""


@dataclass(frozen=True)
class TargetDistribution:
    """Probability of each amplitude level (index 0 is the smallest level)."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) == 0:
            raise ValueError("empty distribution")
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise ValueError(f"probabilities must be finite and non-negative: {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {math.fsum(probs)!r}")

    @property
    def num_levels(self) -> int:
        return len(self.probs)

    def entropy(self) -> float:
        """Entropy in bits."""
        return -math.fsum(p * math.log2(p) for p in self.probs if p > 0)


PAPER_DISTRIBUTION = TargetDistribution((0.4, 0.3, 0.2, 0.1))


@dataclass(frozen=True)
class Composition:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative count in composition {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    def probs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


@dataclass(frozen=True)
class DmCodebookInfo:
    n: int
    k: int
    num_sequences: int
    entropy: float
    rate_loss: float

    @property
    def rate(self) -> float:
        return self.k / self.n


def derive_composition(dist: TargetDistribution, n: int) -> Composition:
    """Round ``n * probs`` to integers with the largest-remainder method.

    Remainder ties go to the more probable amplitude, then to the lower index.
    """
    nonzero = sum(1 for p in dist.probs if p > 0)
    if n < 1 or n < nonzero:
        raise ValueError(f"block too short: n={n} for {nonzero} nonzero probabilities")
    # rationals so that e.g. 0.3 * 10 is not 2.9999...
    ideal = [Fraction(p).limit_denominator(10**12) * n for p in dist.probs]
    counts = [math.floor(x) for x in ideal]
    short = n - sum(counts)
    order = sorted(
        range(dist.num_levels),
        key=lambda a: (-(ideal[a] - counts[a]), -dist.probs[a], a),
    )
    for a in order[:short]:
        counts[a] += 1
    return Composition(tuple(counts))


def multinomial(counts: Sequence[int]) -> int:
    """Exact multinomial coefficient ``(sum counts)! / prod(counts!)``."""
    total = 0
    result = 1
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def codebook_info(comp: Composition, dist: TargetDistribution) -> DmCodebookInfo:
    num = multinomial(comp.counts)
    k = num.bit_length() - 1
    h = dist.entropy()
    return DmCodebookInfo(n=comp.n, k=k, num_sequences=num, entropy=h, rate_loss=h - k / comp.n)


def _sizing(comp: Composition) -> DmCodebookInfo:
    # codebook size only; entropy and rate loss are not needed to encode
    num = multinomial(comp.counts)
    return DmCodebookInfo(n=comp.n, k=num.bit_length() - 1, num_sequences=num, entropy=math.nan, rate_loss=math.nan)


def _unrank(rank: int, counts: Sequence[int], total: int) -> list[int]:
    # lexicographic unranking of a multiset permutation
    remaining = list(counts)
    m = sum(remaining)
    out = []
    for _ in range(m):
        for a, c in enumerate(remaining):
            if c == 0:
                continue
            sub = total * c // m
            if rank < sub:
                break
            rank -= sub
        out.append(a)
        total = sub
        remaining[a] -= 1
        m -= 1
    return out


def _rank(block: Sequence[int], counts: Sequence[int], total: int) -> int:
    remaining = list(counts)
    m = sum(remaining)
    rank = 0
    for s in block:
        for a in range(s):
            if remaining[a]:
                rank += total * remaining[a] // m
        total = total * remaining[s] // m
        remaining[s] -= 1
        m -= 1
    return rank


def ccdm_encode_index(index: int, comp: Composition, info: DmCodebookInfo | None = None) -> list[int]:
    """Encode the integer ``index`` in ``[0, 2**k)`` to an amplitude block."""
    if info is None:
        info = _sizing(comp)
    if not 0 <= index < (1 << info.k):
        raise ValueError(f"index {index} out of range for k={info.k}")
    rank = (index * info.num_sequences) >> info.k
    return _unrank(rank, comp.counts, info.num_sequences)


def ccdm_decode_index(block: Sequence[int], comp: Composition, info: DmCodebookInfo | None = None) -> int:
    block = [int(s) for s in block]
    if len(block) != comp.n:
        raise ValueError(f"block length {len(block)} does not match n={comp.n}")
    found = [0] * len(comp.counts)
    for s in block:
        if not 0 <= s < len(comp.counts):
            raise ValueError(f"amplitude index {s} out of range")
        found[s] += 1
    if tuple(found) != comp.counts:
        raise ValueError(f"composition mismatch: block has {found}, expected {list(comp.counts)}")
    if info is None:
        info = _sizing(comp)
    rank = _rank(block, comp.counts, info.num_sequences)
    # smallest index whose rank is >= the given rank
    index = -((-rank << info.k) // info.num_sequences)
    if index >= (1 << info.k) or (index * info.num_sequences) >> info.k != rank:
        raise NonCodewordError("non-codeword: block is not in the encoder image")
    return index


def _bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | (int(b) & 1)
    return value


def _int_to_bits(value: int, k: int) -> list[int]:
    return [(value >> (k - 1 - i)) & 1 for i in range(k)]


def ccdm_encode(bits: Sequence[int], comp: Composition, info: DmCodebookInfo | None = None) -> list[int]:
    """Map exactly ``k`` bits (MSB first) to an amplitude block of length ``n``."""
    if info is None:
        info = _sizing(comp)
    if len(bits) != info.k:
        raise ValueError(f"expected {info.k} input bits, got {len(bits)}")
    return ccdm_encode_index(_bits_to_int(bits), comp, info)


def ccdm_decode(block: Sequence[int], comp: Composition, info: DmCodebookInfo | None = None) -> list[int]:
    if info is None:
        info = _sizing(comp)
    return _int_to_bits(ccdm_decode_index(block, comp, info), info.k)


@dataclass(frozen=True)
class AmplitudeSequence:
    """Concatenated CCDM blocks of one polarization."""

    amplitudes: np.ndarray
    block_length: int

    @property
    def num_blocks(self) -> int:
        return len(self.amplitudes) // self.block_length

    def blocks(self) -> np.ndarray:
        return self.amplitudes[: self.num_blocks * self.block_length].reshape(self.num_blocks, self.block_length)

    def __len__(self):
        return len(self.amplitudes)


def build_sequence(
    dist: TargetDistribution,
    n: int,
    total_amplitudes: int,
    rng: np.random.Generator | int | None = None,
) -> AmplitudeSequence:
    """Encode uniformly random bits block by block.

    ``total_amplitudes`` is truncated down to a multiple of ``n``. All input
    bits are drawn from ``rng`` in one call before encoding, so the result only
    depends on the generator state.
    """
    rng = np.random.default_rng(rng)
    comp = derive_composition(dist, n)
    info = codebook_info(comp, dist)
    num_blocks = total_amplitudes // n
    bits = rng.integers(0, 2, size=(num_blocks, info.k), dtype=np.uint8)
    out = np.empty(num_blocks * n, dtype=np.int8)
    if info.k == 0:
        block = _unrank(0, comp.counts, info.num_sequences)
        out[:] = np.tile(block, num_blocks)
        return AmplitudeSequence(out, n)
    packed = np.packbits(bits, axis=1)
    shift = packed.shape[1] * 8 - info.k
    for i in range(num_blocks):
        index = int.from_bytes(packed[i].tobytes(), "big") >> shift
        out[i * n:(i + 1) * n] = ccdm_encode_index(index, comp, info)
    return AmplitudeSequence(out, n)
