"""Probabilistic amplitude shaping onto 64QAM, pilot framing and interleaving."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .shaping import AmplitudeSequence, TargetDistribution

__all__ = [
    "ConstellationSpec",
    "SymbolFrame",
    "pas_map",
    "insert_pilots",
    "remove_pilots",
    "interleave",
    "deinterleave",
    "QPSK",
]

QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)

# Binary reflected Gray code of 8-ASK, levels -7..7, first bit is the sign.
# Amplitude bits depend only on |level|, which is what makes PAS work.
_AMP_LABELS = np.array([[1, 0], [1, 1], [0, 1], [0, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class ConstellationSpec:
    """Shaped 64QAM built from two PAS-labelled 8-ASK dimensions.

    Per dimension a label is ``(sign, amp_bit_1, amp_bit_2)``; the 6-bit
    symbol label is the I label followed by the Q label. ``scale`` makes the
    average energy one under ``dist`` with uniform signs.
    """

    dist: TargetDistribution
    amplitude_levels: tuple[int, ...] = (1, 3, 5, 7)

    m = 6

    def __post_init__(self):
        if len(self.amplitude_levels) != self.dist.num_levels:
            raise ValueError("one probability per amplitude level is required")

    @property
    def scale(self) -> float:
        levels = np.asarray(self.amplitude_levels, dtype=float)
        return 1.0 / np.sqrt(2 * np.dot(self.dist.probs, levels**2))

    def ask_points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """8-ASK levels (unscaled), their 3-bit labels and their probabilities."""
        levels = np.asarray(self.amplitude_levels, dtype=float)
        probs = np.asarray(self.dist.probs)
        pts, labels, priors = [], [], []
        for sign in (0, 1):
            for a in range(len(levels)):
                pts.append(levels[a] if sign else -levels[a])
                labels.append([sign, *_AMP_LABELS[a]])
                priors.append(probs[a] / 2)
        order = np.argsort(pts)
        return np.array(pts)[order], np.array(labels, dtype=np.uint8)[order], np.array(priors)[order]

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All 64 scaled points, their 6-bit labels and prior probabilities."""
        pts, lab, pri = self.ask_points()
        i, q = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")
        i, q = i.ravel(), q.ravel()
        symbols = (pts[i] + 1j * pts[q]) * self.scale
        labels = np.concatenate([lab[i], lab[q]], axis=1)
        return symbols, labels, pri[i] * pri[q]


@dataclass
class SymbolFrame:
    """Transmit frame of one polarization of one WDM channel."""

    symbols: np.ndarray
    pilot_mask: np.ndarray
    pilot_period: int = 0
    payload_bits: np.ndarray | None = field(default=None, repr=False)

    @property
    def payload(self) -> np.ndarray:
        return self.symbols[~self.pilot_mask]

    def __len__(self):
        return len(self.symbols)


def pas_map(amps, sign_bits, spec: ConstellationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Combine shaped amplitudes and uniform sign bits into 64QAM symbols.

    Consecutive amplitudes fill I and Q of consecutive symbols, i.e. symbol
    ``t`` uses ``amps[2t]`` for I and ``amps[2t + 1]`` for Q.

    Returns
    -------
    symbols : complex ndarray, shape (T,)
    labels : uint8 ndarray, shape (T, 6)
    """
    amps = np.asarray(amps.amplitudes if isinstance(amps, AmplitudeSequence) else amps)
    signs = np.asarray(sign_bits, dtype=np.uint8)
    if len(amps) % 2:
        raise ValueError(f"need an even number of amplitudes, got {len(amps)}")
    if signs.shape != amps.shape:
        raise ValueError(f"{len(signs)} sign bits for {len(amps)} amplitudes")
    levels = np.asarray(spec.amplitude_levels, dtype=float)[amps]
    ask = np.where(signs == 1, levels, -levels) * spec.scale
    symbols = ask[0::2] + 1j * ask[1::2]
    dim_labels = np.concatenate([signs[:, None], _AMP_LABELS[amps]], axis=1)
    labels = dim_labels.reshape(-1, 6)
    return symbols, labels


def insert_pilots(
    payload: np.ndarray,
    period: int | None,
    rng: np.random.Generator | int | None = None,
    *,
    power: float = 1.0,
    pattern: str = "random",
) -> SymbolFrame:
    """Insert one QPSK pilot after every ``period - 1`` payload symbols.

    ``period`` is the inverse pilot rate (32 for a rate of 1/32); ``None`` or 0
    disables pilots. A trailing payload group shorter than ``period - 1`` gets
    no pilot. ``pattern`` is ``"random"`` (uniform QPSK) or ``"fixed"``.
    """
    payload = np.asarray(payload)
    if not period:
        return SymbolFrame(payload.copy(), np.zeros(len(payload), dtype=bool), 0)
    if period < 2:
        raise ValueError(f"pilot period must be >= 2, got {period}")
    group = period - 1
    num_pilots = len(payload) // group
    total = len(payload) + num_pilots
    mask = np.zeros(total, dtype=bool)
    mask[np.arange(1, num_pilots + 1) * period - 1] = True
    if pattern == "random":
        pilots = QPSK[np.random.default_rng(rng).integers(0, 4, size=num_pilots)]
    elif pattern == "fixed":
        pilots = np.full(num_pilots, QPSK[0])
    else:
        raise ValueError(f"unknown pilot pattern {pattern!r}")
    symbols = np.empty(total, dtype=complex)
    symbols[mask] = pilots * np.sqrt(power)
    symbols[~mask] = payload
    return SymbolFrame(symbols, mask, period)


def remove_pilots(frame: SymbolFrame | np.ndarray, pilot_mask: np.ndarray | None = None) -> np.ndarray:
    """Payload part of a frame, or of any sequence aligned with ``pilot_mask``."""
    if isinstance(frame, SymbolFrame):
        return frame.payload
    if pilot_mask is None:
        raise ValueError("pilot_mask is required for bare symbol arrays")
    return np.asarray(frame)[~np.asarray(pilot_mask)]


def _permutation(length: int, rng) -> np.ndarray:
    return np.random.default_rng(rng).permutation(length)


def interleave(amps: AmplitudeSequence, rng: np.random.Generator | int | None) -> AmplitudeSequence:
    """Uniformly random permutation of the whole sequence (destroys block structure)."""
    perm = _permutation(len(amps), rng)
    return AmplitudeSequence(amps.amplitudes[perm], amps.block_length)


def deinterleave(amps: AmplitudeSequence, rng: np.random.Generator | int | None) -> AmplitudeSequence:
    """Inverse of :func:`interleave` given the same seed."""
    perm = _permutation(len(amps), rng)
    out = np.empty_like(amps.amplitudes)
    out[perm] = amps.amplitudes
    return AmplitudeSequence(out, amps.block_length)
