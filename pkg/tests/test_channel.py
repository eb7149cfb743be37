import math

import numpy as np
import pytest
import scipy.constants as const
import scipy.fft as sfft

from pcsfiber.channel import (
    AmplifierParams,
    FiberParams,
    FieldWaveform,
    NumericalBlowupError,
    WdmConfig,
    ase_variance,
    awgn_channel,
    dispersion_phase,
    matched_filter,
    modulate_wdm,
    propagate_ssfm,
    pulse_shape,
    read_field,
    write_field,
)
from pcsfiber.framing import QPSK, ConstellationSpec, pas_map
from pcsfiber.shaping import PAPER_DISTRIBUTION, build_sequence

NO_NOISE = AmplifierParams(noise=False)
FC = const.c / 1550e-9


def qam_symbols(num, seed):
    rng = np.random.default_rng(seed)
    seq = build_sequence(PAPER_DISTRIBUTION, 50, 2 * num, rng)
    sym, _ = pas_map(seq, rng.integers(0, 2, len(seq)), ConstellationSpec(PAPER_DISTRIBUTION))
    return sym


def channel_pairs(num_channels, num, seed=0):
    return [(qam_symbols(num, seed + 2 * c), qam_symbols(num, seed + 2 * c + 1)) for c in range(num_channels)]


def random_field(num=4096, power=1e-3, seed=0, fs=336e9):
    rng = np.random.default_rng(seed)
    e = (rng.standard_normal((2, num)) + 1j * rng.standard_normal((2, num))) * math.sqrt(power / 4)
    return FieldWaveform(e[0], e[1], fs, FC)


def test_fiber_defaults():
    fiber = FiberParams()
    assert fiber.span_loss_db == pytest.approx(16.0)
    assert fiber.steps_per_span == 800
    assert fiber.center_frequency == pytest.approx(193.41e12, rel=1e-4)
    with pytest.raises(ValueError):
        FiberParams(step_size_m=300).steps_per_span


def test_rrc_roundtrip_is_isi_free():
    sym = qam_symbols(2048, 1)
    for sps in (2, 8, 16):
        out = matched_filter(pulse_shape(sym, sps, 0.1), sps, 0.1)
        assert np.sqrt(np.mean(np.abs(out - sym) ** 2)) < 1e-6


def test_pulse_shape_power():
    sym = qam_symbols(4096, 2)
    wave = pulse_shape(sym, 8, 0.1)
    assert np.mean(np.abs(wave) ** 2) == pytest.approx(np.mean(np.abs(sym) ** 2), rel=0.02)


def test_single_channel_power():
    cfg = WdmConfig(num_channels=1, samples_per_symbol=8)
    field = modulate_wdm(channel_pairs(1, 8192), cfg)
    assert 10 * math.log10(field.power() / 1e-3) == pytest.approx(1.0, abs=0.05)


def test_seven_channel_power_sums():
    num = 4096
    pairs = channel_pairs(7, num)
    cfg7 = WdmConfig(num_channels=7, samples_per_symbol=16)
    total = modulate_wdm(pairs, cfg7).power()
    single = modulate_wdm([pairs[3]], WdmConfig(num_channels=1, samples_per_symbol=16)).power()
    assert 10 * math.log10(total / (7 * single)) == pytest.approx(0, abs=0.1)


def test_bandwidth_overflow():
    cfg = WdmConfig(num_channels=7, samples_per_symbol=8)
    with pytest.raises(ValueError, match="bandwidth overflow"):
        modulate_wdm(channel_pairs(7, 64), cfg)


def test_channel_length_mismatch():
    cfg = WdmConfig(num_channels=1, samples_per_symbol=8)
    with pytest.raises(ValueError):
        modulate_wdm([(np.ones(10), np.ones(12))], cfg)


def test_dispersion_operator_matches_formula():
    fiber = FiberParams()
    field = random_field(1024)
    f = field.frequencies()
    z = 100.0
    expected = np.exp(-1j * np.pi * 17e-6 * (1550e-9) ** 2 / 299792458.0 * f**2 * z)
    got = np.exp(1j * dispersion_phase(f, fiber, z))
    assert np.max(np.abs(got - expected)) < 1e-12
    # one linear step through the propagator (gamma = 0, lossless, one step)
    one = FiberParams(attenuation_db_km=0, gamma_per_w_km=0, span_length_km=0.1, num_spans=1)
    out = propagate_ssfm(field, one, AmplifierParams(gain_db=0, noise=False))
    direct = sfft.ifft(sfft.fft(field.stacked(), axis=-1) * expected, axis=-1)
    np.testing.assert_allclose(out.stacked(), direct, rtol=0, atol=1e-12 * np.max(np.abs(direct)))


def test_linear_all_pass():
    field = random_field(2048)
    fiber = FiberParams(gamma_per_w_km=0, num_spans=2, step_size_m=1000)
    out = propagate_ssfm(field, fiber, NO_NOISE)
    s_in = np.abs(sfft.fft(field.stacked(), axis=-1))
    s_out = np.abs(sfft.fft(out.stacked(), axis=-1))
    assert np.max(np.abs(s_out - s_in)) / np.max(s_in) < 1e-10


def test_cw_manakov_phase():
    power = 2e-3
    num = 64
    field = FieldWaveform(np.full(num, math.sqrt(power), complex), np.zeros(num, complex), 100e9, FC)
    fiber = FiberParams(attenuation_db_km=0, dispersion_ps_nm_km=0, num_spans=10)
    out = propagate_ssfm(field, fiber, AmplifierParams(gain_db=0, noise=False))
    expected = 8 / 9 * fiber.gamma * power * fiber.link_length_m
    err = np.angle(out.pol_x * np.exp(-1j * expected))
    assert np.max(np.abs(err)) < 1e-9
    np.testing.assert_allclose(np.abs(out.pol_x), math.sqrt(power), rtol=1e-12)


def test_cross_polarization_phase_counts_total_power():
    px, py = 1e-3, 2e-3
    field = FieldWaveform(np.full(16, math.sqrt(px), complex), np.full(16, math.sqrt(py), complex), 100e9, FC)
    fiber = FiberParams(attenuation_db_km=0, dispersion_ps_nm_km=0, num_spans=1)
    out = propagate_ssfm(field, fiber, AmplifierParams(gain_db=0, noise=False))
    expected = 8 / 9 * fiber.gamma * (px + py) * fiber.link_length_m
    assert np.max(np.abs(np.angle(out.pol_y * np.exp(-1j * expected)))) < 1e-9


def test_energy_conserved_without_loss():
    field = random_field(4096, power=5e-3)
    fiber = FiberParams(attenuation_db_km=0, num_spans=10, step_size_m=1000)
    out = propagate_ssfm(field, fiber, AmplifierParams(gain_db=0, noise=False))
    assert out.energy() == pytest.approx(field.energy(), rel=1e-9)


def test_loss_and_gain_balance():
    field = random_field(1024)
    fiber = FiberParams(gamma_per_w_km=0, num_spans=3, step_size_m=2000)
    out = propagate_ssfm(field, fiber, NO_NOISE)
    assert out.power() == pytest.approx(field.power(), rel=1e-10)


def test_ase_variance_and_psd():
    num = 2**18
    fs = 336e9
    zero = FieldWaveform(np.zeros(num, complex), np.zeros(num, complex), fs, FC)
    fiber = FiberParams(num_spans=1, step_size_m=80_000)
    amp = AmplifierParams()
    out = propagate_ssfm(zero, fiber, amp, noise_seed=3)
    s_ase = 10 ** 0.6 / 2 * const.h * FC * (10**1.6 - 1)
    assert ase_variance(amp, fs, FC) == pytest.approx(s_ase * fs)
    for pol in (out.pol_x, out.pol_y):
        assert np.mean(np.abs(pol) ** 2) == pytest.approx(s_ase * fs, rel=0.02)
        segments = pol.reshape(64, -1)
        psd = np.mean(np.abs(sfft.fft(segments, axis=-1)) ** 2, axis=0) / (segments.shape[1] * fs)
        assert np.mean(psd) == pytest.approx(s_ase, rel=0.02)
        # white: every quarter of the band at the same level
        for quarter in np.array_split(psd, 4):
            assert np.mean(quarter) == pytest.approx(s_ase, rel=0.02)
    np.testing.assert_allclose(np.mean(out.pol_x * out.pol_y.conj()), 0, atol=0.02 * s_ase * fs)


def test_noise_determinism():
    field = random_field(2048)
    fiber = FiberParams(num_spans=2, step_size_m=8000)
    a = propagate_ssfm(field, fiber, AmplifierParams(), noise_seed=[1, 2])
    b = propagate_ssfm(field, fiber, AmplifierParams(), noise_seed=[1, 2])
    c = propagate_ssfm(field, fiber, AmplifierParams(), noise_seed=[1, 3])
    np.testing.assert_array_equal(a.stacked(), b.stacked())
    assert not np.array_equal(a.stacked(), c.stacked())


def test_single_precision_close_to_double():
    field = random_field(4096, power=2e-3)
    fiber = FiberParams(num_spans=2, step_size_m=1000)
    a = propagate_ssfm(field, fiber, NO_NOISE)
    b = propagate_ssfm(field, fiber, NO_NOISE, dtype=np.complex64)
    rel = np.sqrt(np.mean(np.abs(a.stacked() - b.stacked()) ** 2) / np.mean(np.abs(a.stacked()) ** 2))
    assert rel < 1e-4


def test_numerical_blowup_reports_position():
    field = random_field(256)
    field.pol_x[5] = np.nan
    with pytest.raises(NumericalBlowupError, match="span 0, step 0"):
        propagate_ssfm(field, FiberParams(num_spans=1, step_size_m=8000), NO_NOISE)


def test_span_callback_and_dump_roundtrip(tmp_path):
    field = random_field(512)
    seen = []

    def dump(span, fld):
        path = tmp_path / f"span{span}.bin"
        write_field(path, fld)
        seen.append((span, fld))

    propagate_ssfm(field, FiberParams(num_spans=2, step_size_m=8000), NO_NOISE, span_callback=dump)
    assert [s for s, _ in seen] == [0, 1]
    back = read_field(tmp_path / "span1.bin")
    assert back.sample_rate == field.sample_rate and len(back) == 512
    np.testing.assert_allclose(back.pol_x, seen[1][1].pol_x, rtol=1e-6, atol=1e-9)
    raw = (tmp_path / "span1.bin").read_bytes()
    assert raw[:4] == b"PCSF" and len(raw) == 32 + 2 * 512 * 8


def test_awgn_identity_and_level():
    x = qam_symbols(300_000, 4)
    (same,) = awgn_channel([x], math.inf)
    np.testing.assert_array_equal(same, x)
    (y,) = awgn_channel([x], 18.0, 5)
    measured = 10 * math.log10(1 / np.var(y - x))
    assert measured == pytest.approx(18.0, abs=0.02)


def test_awgn_pilot_frame_input():
    from pcsfiber.framing import insert_pilots

    frame = insert_pilots(qam_symbols(310, 6), 32, 1)
    out = awgn_channel([frame, frame], 30.0, 2)
    assert len(out) == 2 and out[0].shape == frame.symbols.shape
    assert np.all(np.isin(np.round(frame.symbols[frame.pilot_mask], 12), np.round(QPSK, 12)))
