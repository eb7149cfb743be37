"""Effective SNR, bit-metric decoding rate and finite-length AIR.

All quantities are computed on payload (64QAM) symbols only; strip pilots
before building a :class:`SymbolTrace`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .framing import ConstellationSpec
from .shaping import AmplitudeSequence, DmCodebookInfo

__all__ = [
    "AMPLITUDES_PER_SYMBOL",
    "SymbolTrace",
    "LinkMetrics",
    "effective_snr",
    "to_db",
    "bmd_rate",
    "air_n",
    "link_metrics",
    "run_length_stats",
    "mean_run_length",
]

# Two shaped amplitudes (I and Q) per 2D symbol; converts the per-amplitude
# DM rate loss to bits per 2D symbol.
AMPLITUDES_PER_SYMBOL = 2


@dataclass
class SymbolTrace:
    x: np.ndarray
    y: np.ndarray
    bit_labels: np.ndarray
    points: np.ndarray
    point_labels: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y)
        self.bit_labels = np.asarray(self.bit_labels, dtype=np.uint8)
        if not (len(self.x) == len(self.y) == len(self.bit_labels)):
            raise ValueError("x, y and bit_labels must have the same length")
        if abs(np.sum(self.priors) - 1) > 1e-9:
            raise ValueError("priors must sum to 1")

    @classmethod
    def from_spec(cls, x, y, bit_labels, spec: ConstellationSpec) -> "SymbolTrace":
        points, labels, priors = spec.points()
        return cls(x, y, bit_labels, points, labels, priors)

    @property
    def m(self) -> int:
        return self.point_labels.shape[1]


def effective_snr(trace: SymbolTrace) -> float:
    """Linear SNR ``1 / var(y - x)``, variance taken about the mean error.

    Returns ``inf`` when the error has zero variance.
    """
    if len(trace.x) < 2:
        raise ValueError("need at least two symbols")
    err = trace.y - trace.x
    var = np.mean(np.abs(err - err.mean()) ** 2)
    return math.inf if var == 0 else 1.0 / var


def to_db(snr: float) -> float:
    return 10 * math.log10(snr) if snr > 0 else -math.inf


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def bmd_rate(trace: SymbolTrace, snr: float | None = None, chunk: int = 8192) -> float:
    """``H(C) - sum_i H(C_i | Y)`` in bits per 2D symbol.

    The bit posteriors use a circular Gaussian auxiliary channel with variance
    ``1 / snr`` (by default the effective SNR of ``trace``) and the symbol
    priors of the trace. The conditional entropies are sample means of
    ``-log2 q(c_i | y)`` over the trace.
    """
    h_c = _entropy_bits(np.asarray(trace.priors))
    if snr is None:
        snr = effective_snr(trace)
    if math.isinf(snr):
        # noiseless limit: every bit posterior collapses onto the sent bit
        return h_c
    if not snr > 0:
        raise ValueError(f"non-positive SNR estimate {snr}")
    with np.errstate(divide="ignore"):
        log_prior = np.log(trace.priors)
    masks = [trace.point_labels[:, i] == 1 for i in range(trace.m)]
    total = 0.0
    for start in range(0, len(trace.y), chunk):
        y = trace.y[start:start + chunk]
        bits = trace.bit_labels[start:start + chunk]
        metric = log_prior - snr * np.abs(y[:, None] - trace.points[None, :]) ** 2
        norm = logsumexp(metric, axis=1)
        for i, ones in enumerate(masks):
            lse1 = logsumexp(metric[:, ones], axis=1)
            lse0 = logsumexp(metric[:, ~ones], axis=1)
            sent = np.where(bits[:, i] == 1, lse1, lse0)
            total += float(np.sum(norm - sent))
    cond = total / len(trace.y) / math.log(2)
    return h_c - cond


def air_n(trace: SymbolTrace, dm: DmCodebookInfo, snr: float | None = None) -> float:
    """BMD rate minus the 2D rate loss of a length-n CCDM."""
    return bmd_rate(trace, snr) - AMPLITUDES_PER_SYMBOL * dm.rate_loss


@dataclass
class LinkMetrics:
    snr_db_x: float
    snr_db_y: float
    snr_db_mean: float
    bmd_rate: float
    rate_loss_2d: float
    air_n: float
    n: int
    pilots_enabled: bool = False
    seed: int | None = None


def link_metrics(traces, dm: DmCodebookInfo, pilots_enabled: bool = False, seed: int | None = None) -> LinkMetrics:
    """Per-polarization SNR and BMD rate, averaged over the polarizations."""
    snrs = [effective_snr(t) for t in traces]
    rates = [bmd_rate(t, s) for t, s in zip(traces, snrs)]
    bmd = float(np.mean(rates))
    loss = AMPLITUDES_PER_SYMBOL * dm.rate_loss
    return LinkMetrics(
        snr_db_x=to_db(snrs[0]),
        snr_db_y=to_db(snrs[-1]),
        snr_db_mean=to_db(float(np.mean(snrs))),
        bmd_rate=bmd,
        rate_loss_2d=loss,
        air_n=bmd - loss,
        n=dm.n,
        pilots_enabled=pilots_enabled,
        seed=seed,
    )


def run_length_stats(amps) -> dict[int, Counter]:
    """Histogram of maximal identical-symbol runs, keyed by amplitude value."""
    a = np.asarray(amps.amplitudes if isinstance(amps, AmplitudeSequence) else amps)
    stats: dict[int, Counter] = {}
    if a.size == 0:
        return stats
    change = np.flatnonzero(np.diff(a)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [a.size]]))
    for value, length in zip(a[starts].tolist(), lengths.tolist()):
        stats.setdefault(value, Counter())[length] += 1
    return stats


def mean_run_length(amps) -> float:
    stats = run_length_stats(amps)
    runs = sum(sum(c.values()) for c in stats.values())
    symbols = sum(k * v for c in stats.values() for k, v in c.items())
    return symbols / runs if runs else 0.0
