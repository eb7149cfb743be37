"""Ideal coherent receiver: CD compensation, matched filtering, phase removal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .channel import FiberParams, FieldWaveform, WdmConfig, dispersion_phase, matched_filter

__all__ = ["ReceivedSymbols", "cd_compensate", "extract_center_channel", "phase_compensate"]


@dataclass
class ReceivedSymbols:
    """Symbols at one sample per symbol, aligned with the transmitted frames."""

    pol_x: np.ndarray
    pol_y: np.ndarray

    def __iter__(self):
        return iter((self.pol_x, self.pol_y))


def cd_compensate(field: FieldWaveform, fiber: FiberParams, length_m: float | None = None) -> FieldWaveform:
    """Undo the dispersion accumulated over the link (or ``length_m``)."""
    if length_m is None:
        length_m = fiber.link_length_m
    if length_m == 0:
        return FieldWaveform(field.pol_x.copy(), field.pol_y.copy(), field.sample_rate, field.center_frequency)
    inverse = np.exp(-1j * dispersion_phase(field.frequencies(), fiber, length_m))
    e = sfft.ifft(sfft.fft(field.stacked(), axis=-1) * inverse, axis=-1)
    return FieldWaveform.from_stacked(e, field.sample_rate, field.center_frequency)


def extract_center_channel(field: FieldWaveform, cfg: WdmConfig) -> ReceivedSymbols:
    """Matched-filter the 0 Hz channel and sample it once per symbol.

    The output is rescaled by the known launch amplitude so that a
    back-to-back link returns the unit-energy transmit symbols.
    """
    sps = cfg.samples_per_symbol
    if len(field) % sps:
        raise ValueError(f"{len(field)} samples is not a multiple of {sps} samples per symbol")
    sym = matched_filter(field.stacked(), sps, cfg.rrc_rolloff) / math.sqrt(cfg.per_channel_power / 2)
    return ReceivedSymbols(sym[0], sym[1])


def phase_compensate(rx: ReceivedSymbols, tx_ref, joint: bool = False) -> tuple[ReceivedSymbols, np.ndarray]:
    """Remove one constant rotation per polarization, estimated data-aided.

    The angle is ``arg(sum(conj(x) * y))`` over the whole frame, pilots
    included. With ``joint`` a single angle is shared by both polarizations.

    Returns
    -------
    compensated : ReceivedSymbols
    angles : ndarray, shape (2,)
    """
    refs = [np.asarray(getattr(t, "symbols", t)) for t in tx_ref]
    ys = list(rx)
    corr = np.array([np.vdot(x, y) for x, y in zip(refs, ys)])
    if joint:
        corr = np.full(2, corr.sum())
    if np.any(np.abs(corr) == 0):
        raise ValueError("degenerate reference: zero correlation with transmitted symbols")
    angles = np.angle(corr)
    out = [y * np.exp(-1j * a) for y, a in zip(ys, angles)]
    return ReceivedSymbols(out[0], out[1]), angles
