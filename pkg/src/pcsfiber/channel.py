"""WDM transmitter, Manakov split-step fiber model, EDFA noise and AWGN control.

Units are SI inside the functions (m, s, W, Hz); parameter containers keep
the customary engineering units and convert on access.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.constants as const
import scipy.fft as sfft

__all__ = [
    "FiberParams",
    "WdmConfig",
    "AmplifierParams",
    "FieldWaveform",
    "NumericalBlowupError",
    "rrc_spectrum",
    "pulse_shape",
    "matched_filter",
    "modulate_wdm",
    "dispersion_phase",
    "propagate_ssfm",
    "ase_variance",
    "awgn_channel",
    "write_field",
    "read_field",
]

MANAKOV_FACTOR = 8.0 / 9.0


class NumericalBlowupError(FloatingPointError):
    def __init__(self, span: int, step: int):
        super().__init__(f"numerical blowup at span {span}, step {step}")
        self.span = span
        self.step = step


@dataclass(frozen=True)
class FiberParams:
    attenuation_db_km: float = 0.2
    gamma_per_w_km: float = 1.37
    dispersion_ps_nm_km: float = 17.0
    span_length_km: float = 80.0
    num_spans: int = 10
    step_size_m: float = 100.0
    center_wavelength_nm: float = 1550.0

    def __post_init__(self):
        for name in ("span_length_km", "step_size_m", "center_wavelength_nm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.num_spans < 0:
            raise ValueError("num_spans must be non-negative")
        if min(self.attenuation_db_km, self.gamma_per_w_km, self.dispersion_ps_nm_km) < 0:
            raise ValueError("fiber coefficients must be non-negative")

    @property
    def span_loss_db(self) -> float:
        return self.attenuation_db_km * self.span_length_km

    @property
    def alpha(self) -> float:
        """Power attenuation in 1/m."""
        return self.attenuation_db_km / (10 * math.log10(math.e)) / 1e3

    @property
    def gamma(self) -> float:
        """Nonlinear coefficient in 1/(W m)."""
        return self.gamma_per_w_km / 1e3

    @property
    def dispersion(self) -> float:
        """D in s/m^2."""
        return self.dispersion_ps_nm_km * 1e-6

    @property
    def wavelength(self) -> float:
        return self.center_wavelength_nm * 1e-9

    @property
    def center_frequency(self) -> float:
        return const.c / self.wavelength

    @property
    def steps_per_span(self) -> int:
        ratio = self.span_length_km * 1e3 / self.step_size_m
        steps = round(ratio)
        if steps < 1 or abs(ratio - steps) > 1e-9 * ratio:
            raise ValueError(f"step size {self.step_size_m} m does not divide span length {self.span_length_km} km")
        return steps

    @property
    def link_length_m(self) -> float:
        return self.num_spans * self.span_length_km * 1e3


@dataclass(frozen=True)
class WdmConfig:
    num_channels: int = 7
    symbol_rate: float = 42e9
    grid_spacing: float = 50e9
    per_channel_power_dbm: float = 1.0
    rrc_rolloff: float = 0.10
    samples_per_symbol: int = 16

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    @property
    def per_channel_power(self) -> float:
        """Launch power per channel in W (both polarizations)."""
        return 1e-3 * 10 ** (self.per_channel_power_dbm / 10)

    @property
    def center_index(self) -> int:
        return self.num_channels // 2

    def channel_offsets(self) -> np.ndarray:
        return (np.arange(self.num_channels) - self.center_index) * self.grid_spacing

    def check_bandwidth(self):
        needed = self.num_channels * self.grid_spacing + self.symbol_rate * (1 + self.rrc_rolloff)
        if not self.sample_rate > needed:
            raise ValueError(
                f"bandwidth overflow: simulation bandwidth {self.sample_rate / 1e9:.1f} GHz "
                f"<= required {needed / 1e9:.1f} GHz"
            )


@dataclass(frozen=True)
class AmplifierParams:
    gain_db: float = 16.0
    noise_figure_db: float = 6.0
    noise: bool = True

    @property
    def gain(self) -> float:
        return 10 ** (self.gain_db / 10)

    @property
    def n_sp(self) -> float:
        return 10 ** (self.noise_figure_db / 10) / 2


@dataclass
class FieldWaveform:
    """Dual-polarization complex envelope in sqrt(W)."""

    pol_x: np.ndarray
    pol_y: np.ndarray
    sample_rate: float
    center_frequency: float

    def __post_init__(self):
        if self.pol_x.shape != self.pol_y.shape:
            raise ValueError("polarizations must have equal length")

    def __len__(self):
        return len(self.pol_x)

    def stacked(self) -> np.ndarray:
        return np.stack([self.pol_x, self.pol_y])

    @classmethod
    def from_stacked(cls, e, sample_rate, center_frequency):
        return cls(e[0], e[1], sample_rate, center_frequency)

    def power(self) -> float:
        """Average total power in W."""
        return float(np.mean(np.abs(self.pol_x) ** 2) + np.mean(np.abs(self.pol_y) ** 2))

    def energy(self) -> float:
        return self.power() * len(self) / self.sample_rate

    def frequencies(self) -> np.ndarray:
        return sfft.fftfreq(len(self), 1 / self.sample_rate)


def rrc_spectrum(freqs: np.ndarray, symbol_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response, 1 in the flat part of the band."""
    f = np.abs(freqs) / symbol_rate
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    rc = np.zeros_like(f)
    rc[f <= lo] = 1.0
    if rolloff > 0:
        edge = (f > lo) & (f < hi)
        rc[edge] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[edge] - lo)))
    return np.sqrt(rc)


def _filter_response(num_samples: int, sps: int, rolloff: float) -> np.ndarray:
    freqs = sfft.fftfreq(num_samples, 1 / sps)
    return rrc_spectrum(freqs, 1.0, rolloff)


# Zero stuffing divides the power by sps, so the transmit filter carries a
# gain of sps. Together with the unit-gain receive filter the aliases of
# sps * RC sum to sps, which returns the symbols after decimation, and white
# noise leaves the receive filter with its power in one symbol bandwidth.


def pulse_shape(symbols: np.ndarray, sps: int, rolloff: float) -> np.ndarray:
    """Circular RRC pulse shaping; output has the mean power of the symbols."""
    symbols = np.asarray(symbols)
    up = np.zeros(symbols.shape[:-1] + (symbols.shape[-1] * sps,), dtype=complex)
    up[..., ::sps] = symbols
    h = sps * _filter_response(up.shape[-1], sps, rolloff)
    return sfft.ifft(sfft.fft(up, axis=-1) * h, axis=-1)


def matched_filter(samples: np.ndarray, sps: int, rolloff: float) -> np.ndarray:
    """Matched RRC filter followed by decimation at symbol phase zero."""
    h = _filter_response(samples.shape[-1], sps, rolloff)
    return sfft.ifft(sfft.fft(samples, axis=-1) * h, axis=-1)[..., ::sps]


def _as_pair(frames):
    out = []
    for f in frames:
        out.append(np.asarray(getattr(f, "symbols", f)))
    return out


def modulate_wdm(
    frames: Sequence[Sequence],
    cfg: WdmConfig,
    center_frequency: float = const.c / 1550e-9,
) -> FieldWaveform:
    """Pulse shape every channel, place it on its grid slot and sum.

    ``frames[c]`` holds the (x, y) frames or symbol arrays of channel ``c``;
    channel ``cfg.center_index`` sits at 0 Hz. Each channel is scaled to
    ``cfg.per_channel_power`` split equally over the polarizations. Slots are
    placed on the nearest FFT bin, so the channel frequency is exact to within
    one bin width.
    """
    if len(frames) != cfg.num_channels:
        raise ValueError(f"{len(frames)} channels given, config has {cfg.num_channels}")
    cfg.check_bandwidth()
    sps = cfg.samples_per_symbol
    lengths = {len(s) for pair in frames for s in _as_pair(pair)}
    if len(lengths) != 1:
        raise ValueError(f"all channels and polarizations need the same length, got {sorted(lengths)}")
    num = lengths.pop() * sps
    amp = math.sqrt(cfg.per_channel_power / 2)
    h = sps * _filter_response(num, sps, cfg.rrc_rolloff)
    spectrum = np.zeros((2, num), dtype=complex)
    for pair, offset in zip(frames, cfg.channel_offsets()):
        sym = np.stack(_as_pair(pair))
        up = np.zeros((2, num), dtype=complex)
        up[:, ::sps] = sym
        shift = int(round(offset / cfg.sample_rate * num))
        spectrum += np.roll(sfft.fft(up, axis=-1) * h, shift, axis=-1)
    e = sfft.ifft(spectrum, axis=-1) * amp
    return FieldWaveform.from_stacked(e, cfg.sample_rate, center_frequency)


def dispersion_phase(freqs: np.ndarray, fiber: FiberParams, length_m: float) -> np.ndarray:
    """Phase of the chromatic dispersion transfer function after ``length_m``.

    Equal to ``beta2 / 2 * omega**2 * z`` with ``beta2 = -D lambda^2 / (2 pi c)``;
    the sign pairs with a positive Kerr phase in :func:`propagate_ssfm`.
    """
    return -np.pi * fiber.dispersion * fiber.wavelength**2 / const.c * freqs**2 * length_m


def ase_variance(amp: AmplifierParams, sample_rate: float, center_frequency: float) -> float:
    """ASE power per polarization in the simulation bandwidth (W)."""
    s_ase = amp.n_sp * const.h * center_frequency * (amp.gain - 1)
    return s_ase * sample_rate


def _complex_noise(rng: np.random.Generator, shape, variance: float, dtype) -> np.ndarray:
    real_dtype = np.finfo(dtype).dtype
    sigma = math.sqrt(variance / 2)
    out = np.empty(shape, dtype=dtype)
    out.real = rng.standard_normal(shape, dtype=real_dtype) * sigma
    out.imag = rng.standard_normal(shape, dtype=real_dtype) * sigma
    return out


def propagate_ssfm(
    field: FieldWaveform,
    fiber: FiberParams,
    amp: AmplifierParams,
    noise_seed: int | Sequence[int] | None = None,
    *,
    dtype=np.complex128,
    span_callback: Callable[[int, FieldWaveform], None] | None = None,
    workers: int | None = None,
) -> FieldWaveform:
    """Symmetric split-step solution of the Manakov equation over all spans.

    Each span is integrated with Strang splitting: half linear step
    (dispersion and loss in the frequency domain), full Kerr rotation by
    ``8/9 * gamma * (|Ex|^2 + |Ey|^2) * h``, half linear step, with adjacent
    half steps merged. After every span the field is amplified by the EDFA
    gain and, unless ``amp.noise`` is off, circular Gaussian ASE is added to
    each polarization from a generator keyed by ``(noise_seed, span)``.
    """
    steps = fiber.steps_per_span
    h = fiber.span_length_km * 1e3 / steps
    freqs = field.frequencies()
    e = np.asarray(field.stacked(), dtype=dtype)
    real_dtype = np.finfo(dtype).dtype

    def linear_op(length):
        phase = dispersion_phase(freqs, fiber, length)
        op = np.exp(1j * phase - fiber.alpha / 2 * length)
        return op.astype(dtype)

    half = linear_op(h / 2)
    full = linear_op(h)
    kerr = real_dtype.type(MANAKOV_FACTOR * fiber.gamma * h)
    gain = math.sqrt(amp.gain)
    noise_var = ase_variance(amp, field.sample_rate, field.center_frequency)
    if noise_seed is None:
        seed_key = []
    elif np.ndim(noise_seed) == 0:
        seed_key = [int(noise_seed)]
    else:
        seed_key = [int(s) for s in noise_seed]
    rot = np.empty(e.shape[-1], dtype=dtype)

    for span in range(fiber.num_spans):
        spec = sfft.fft(e, axis=-1, workers=workers)
        spec *= half
        for step in range(steps):
            e = sfft.ifft(spec, axis=-1, overwrite_x=True, workers=workers)
            power = e.real[0] ** 2 + e.imag[0] ** 2 + e.real[1] ** 2 + e.imag[1] ** 2
            if not np.isfinite(power.sum()):
                raise NumericalBlowupError(span, step)
            power *= kerr
            rot.real = np.cos(power)
            rot.imag = np.sin(power)
            e *= rot
            spec = sfft.fft(e, axis=-1, overwrite_x=True, workers=workers)
            spec *= full if step < steps - 1 else half
        e = sfft.ifft(spec, axis=-1, overwrite_x=True, workers=workers)
        e *= gain
        if amp.noise and noise_var > 0:
            rng = np.random.default_rng(np.random.SeedSequence(seed_key + [span]))
            e += _complex_noise(rng, e.shape, noise_var, dtype)
        if span_callback is not None:
            span_callback(span, FieldWaveform.from_stacked(e.copy(), field.sample_rate, field.center_frequency))
    return FieldWaveform.from_stacked(e, field.sample_rate, field.center_frequency)


def awgn_channel(
    symbols: Sequence[np.ndarray],
    snr_db: float,
    rng: np.random.Generator | int | None = None,
) -> list[np.ndarray]:
    """Add circular Gaussian noise of variance ``10**(-snr_db/10)`` to unit-energy symbols.

    ``symbols`` is a sequence of arrays (e.g. one per polarization); an
    infinite SNR returns copies of the input.
    """
    arrays = _as_pair(symbols)
    if math.isinf(snr_db) and snr_db > 0:
        return [a.copy() for a in arrays]
    if not math.isfinite(snr_db):
        raise ValueError(f"invalid SNR {snr_db}")
    rng = np.random.default_rng(rng)
    var = 10 ** (-snr_db / 10)
    return [a + _complex_noise(rng, a.shape, var, np.complex128) for a in arrays]


# Field dump layout, little endian:
#   magic b"PCSF", u32 version, f64 sample_rate, f64 center_frequency, u64 length,
#   then `length` complex64 (re, im float32 pairs) for pol x, then for pol y.
_MAGIC = b"PCSF"
_HEADER = struct.Struct("<4sIddQ")


def write_field(path, field: FieldWaveform):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, field.sample_rate, field.center_frequency, len(field)))
        for pol in (field.pol_x, field.pol_y):
            fh.write(np.asarray(pol, dtype="<c8").tobytes())


def read_field(path) -> FieldWaveform:
    with open(path, "rb") as fh:
        magic, version, fs, fc, length = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != 1:
            raise ValueError(f"{path}: not a field dump")
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != 2 * length:
        raise ValueError(f"{path}: truncated field dump")
    return FieldWaveform(data[:length].astype(complex), data[length:].astype(complex), fs, fc)
