import dataclasses
import math

import numpy as np
import pytest

from capreadout.chopper import (
    ChopperConfig,
    carrier_for,
    charge_amp,
    dc_estimate,
    demodulate,
    flicker_suppression_metric,
    instr_amp,
    run_baseline,
    run_chain,
    suppression_details,
    white_noise_dc_std,
)
from capreadout.errors import OverRangeError
from capreadout.sensors import AccelHalfBridge
from capreadout.signalcore import (
    NoiseSpec,
    Waveform,
    constant,
    design_lowpass_4th,
    estimate_psd,
    filter_apply,
    sine,
    tone_amplitude,
)

PF = 1e-12
FF = 1e-15
BRIDGE = AccelHalfBridge()
# 100 kHz sampling keeps unit tests quick while leaving a decade between
# cutoff, carrier and Nyquist
FAST = ChopperConfig(sample_rate=100e3, f_carrier=10e3, lpf_cutoff=1e3, duration=0.02)


@pytest.fixture(scope="module")
def carrier():
    return sine(1e6, 10_000, 1.0, 10e3)


def test_config_rejects_cutoff_too_close_to_carrier():
    with pytest.raises(ValueError, match="lpf_cutoff"):
        ChopperConfig(lpf_cutoff=2500.0)
    with pytest.raises(ValueError, match="f_carrier"):
        ChopperConfig(f_carrier=600e3)


# --- charge amplifier / instrumentation amplifier --------------------------------

def test_charge_amp_balanced(carrier):
    yp, ym = charge_amp(carrier, 7.048 * PF, 7.048 * PF, 5 * PF)
    np.testing.assert_array_equal(yp.samples, ym.samples)
    np.testing.assert_allclose(yp.samples, -carrier.samples * 7.048 / 5, rtol=1e-12)


def test_charge_amp_one_g_amplitudes(carrier):
    yp, ym = charge_amp(carrier, 7.10984 * PF, 6.98616 * PF, 5 * PF)
    assert tone_amplitude(yp, 10e3) == pytest.approx(1.397232, rel=1e-9)
    assert tone_amplitude(ym, 10e3) == pytest.approx(1.421968, rel=1e-9)


def test_charge_amp_inverse_in_integration_cap(carrier):
    a = charge_amp(carrier, 7.1 * PF, 7.0 * PF, 5 * PF)
    b = charge_amp(carrier, 7.1 * PF, 7.0 * PF, 10 * PF)
    for x, y in zip(a, b):
        np.testing.assert_allclose(y.samples, x.samples / 2, rtol=1e-12)


def test_charge_amp_rejects_non_positive_integration_cap(carrier):
    with pytest.raises(ValueError):
        charge_amp(carrier, 1 * PF, 1 * PF, 0.0)


def test_instr_amp_common_mode_and_gain(carrier):
    assert not np.any(instr_amp(carrier, carrier).samples)
    yp, ym = charge_amp(carrier, 7.10984 * PF, 6.98616 * PF, 5 * PF)
    one = instr_amp(yp, ym, 1.0)
    two = instr_amp(yp, ym, 2.0)
    np.testing.assert_array_equal(two.samples, 2 * one.samples)
    assert tone_amplitude(one, 10e3) == pytest.approx(24.736e-3, rel=1e-9)


def test_instr_amp_shape_mismatch(carrier):
    with pytest.raises(ValueError):
        instr_amp(carrier, Waveform(1e6, np.zeros(10)))


@pytest.mark.parametrize("delta_c", [100 * FF, 61.84 * FF, 1000 * FF])
@pytest.mark.parametrize("c_int", [2 * PF, 5 * PF, 20 * PF])
def test_modulated_amplitude_identity(delta_c, c_int):
    cfg = dataclasses.replace(FAST, c_integrate=c_int)
    bridge = AccelHalfBridge(sensitivity=delta_c)
    res = run_chain(cfg, bridge, 1.0)
    assert res.modulated_amplitude == pytest.approx(cfg.v_carrier * 2 * delta_c / c_int, rel=1e-3)


# --- demodulator / DC estimate --------------------------------------------------

def test_demodulating_the_carrier_gives_half_amplitude_squared():
    a = 0.8
    c = sine(1e6, 100_000, a, 10e3)
    z = demodulate(c, c, 1.0)
    assert np.mean(z.samples) == pytest.approx(a ** 2 / 2, rel=1e-9)
    assert tone_amplitude(z, 20e3) == pytest.approx(a ** 2 / 2, rel=1e-9)


def test_demodulate_zero_and_quadrature():
    c = sine(1e6, 100_000, 1.0, 10e3)
    q = sine(1e6, 100_000, 1.0, 10e3, phase=math.pi / 2)
    assert not np.any(demodulate(c.with_samples(np.zeros(len(c))), c).samples)
    assert abs(np.mean(demodulate(q, c).samples)) < 1e-12


def test_dc_estimate_examples():
    assert dc_estimate(constant(1e3, 100, 3.0), 0.5) == 3.0
    assert abs(dc_estimate(sine(1e4, 2000, 1.0, 100.0), 0.5)) < 1e-12
    fc = 100.0
    fs = 1e5
    step = constant(fs, int(20 / fc * fs), 1.0)
    out = filter_apply(design_lowpass_4th(fc, fs), step)
    assert dc_estimate(out, 0.5) == pytest.approx(1.0, rel=1e-3)


def test_dc_estimate_rejects_bad_fraction():
    with pytest.raises(ValueError):
        dc_estimate(constant(1e3, 10, 1.0), 1.0)
    with pytest.raises(ValueError):
        dc_estimate(constant(1e3, 1, 1.0), 0.99)


# --- full chain ---------------------------------------------------------------------

def test_balanced_bridge_gives_zero():
    for v in (0.1, 1.0, 5.0):
        res = run_chain(dataclasses.replace(FAST, v_carrier=v), BRIDGE, 0.0)
        assert abs(res.dc_out) <= 1e-6


def test_one_g_default_chain():
    res = run_chain(ChopperConfig(), BRIDGE, 1.0)
    assert res.expected_dc == pytest.approx(12.368e-3, rel=1e-12)
    assert res.dc_out == pytest.approx(res.expected_dc, rel=5e-3)
    assert res.modulated_amplitude == pytest.approx(24.736e-3, rel=1e-3)
    assert len(res.v_y) == len(res.v_z) == len(res.v_out) == 200_000


def test_chain_is_linear_in_acceleration():
    levels = np.array([0.25, 0.5, 1.0, 2.0])
    outs = np.array([run_chain(FAST, BRIDGE, a).dc_out for a in levels])
    k = np.dot(levels, outs) / np.dot(levels, levels)  # fit through the origin
    assert np.max(np.abs(outs - k * levels) / np.abs(k * levels)) <= 5e-3
    assert outs[3] / outs[2] == pytest.approx(2.0, rel=5e-3)


def test_over_range_propagates():
    with pytest.raises(OverRangeError):
        run_chain(FAST, BRIDGE, 200.0)


def test_seeded_runs_are_bitwise_identical():
    noise = NoiseSpec(1e-6, 1e-5, 17)
    cfg = dataclasses.replace(FAST, duration=0.05)  # flicker needs >= 4096 samples
    a = run_chain(cfg, BRIDGE, 1.0, noise)
    b = run_chain(cfg, BRIDGE, 1.0, noise)
    for name in ("v_y", "v_z", "v_out"):
        assert getattr(a, name).samples.tobytes() == getattr(b, name).samples.tobytes()
    assert a.dc_out == b.dc_out
    c = run_chain(cfg, BRIDGE, 1.0, noise, seed=18)
    assert c.dc_out != a.dc_out


def test_symmetric_parasitics_cancel_and_asymmetric_shift():
    clean = run_chain(FAST, BRIDGE, 1.0)
    sym = run_chain(dataclasses.replace(FAST, parasitic_plus=2 * PF, parasitic_minus=2 * PF),
                    BRIDGE, 1.0)
    np.testing.assert_allclose(sym.v_y.samples, clean.v_y.samples, rtol=0, atol=1e-15)
    skew = 10 * FF
    asym = run_chain(dataclasses.replace(FAST, parasitic_plus=skew), BRIDGE, 1.0)
    shift = FAST.volts_per_farad * skew / 2
    assert asym.dc_out - clean.dc_out == pytest.approx(shift, rel=5e-3)


def test_accel_profile_hook():
    n = FAST.n_samples
    flat = run_chain(FAST, BRIDGE, np.ones(n))
    scalar = run_chain(FAST, BRIDGE, 1.0)
    assert flat.dc_out == pytest.approx(scalar.dc_out, rel=1e-12)
    with pytest.raises(ValueError):
        run_chain(FAST, BRIDGE, np.ones(n - 1))


def test_spectral_swap():
    cfg = ChopperConfig(duration=0.5)
    fc = cfg.f_carrier
    # signal only: carrier-frequency tone in v_y, DC in v_z
    sig = run_chain(cfg, BRIDGE, 1.0)
    spec_y = estimate_psd(sig.v_y, 2**16)
    spec_z = estimate_psd(sig.v_z, 2**16)
    assert abs(spec_y.peak_frequency() - fc) <= spec_y.bin_width
    assert spec_z.peak_frequency(0, fc / 2) <= spec_z.bin_width

    # noise only: low-frequency in v_y, moved up around the carrier in v_z
    noise = run_chain(cfg, BRIDGE, 0.0, NoiseSpec(0.0, 10e-6, 3))
    ny = estimate_psd(noise.v_y, 2**16)
    nz = estimate_psd(noise.v_z, 2**16)
    low = (ny.frequencies > ny.bin_width) & (ny.frequencies < fc / 10)
    near = (ny.frequencies > 0.9 * fc) & (ny.frequencies < 1.1 * fc)
    # 1/f density averaged over the low band is ~40x the density at the carrier
    assert np.mean(ny.psd[low]) > 10 * np.mean(ny.psd[near])
    assert np.mean(nz.psd[near]) > 10 * np.mean(nz.psd[low])
    assert abs(nz.peak_frequency() - fc) <= 2 * nz.bin_width


# --- suppression metric --------------------------------------------------------------

def test_suppression_needs_noise():
    with pytest.raises(ValueError):
        flicker_suppression_metric(FAST, BRIDGE, 1.0, NoiseSpec())


def test_baseline_has_the_same_ideal_output():
    a = run_chain(FAST, BRIDGE, 1.0)
    b = run_baseline(FAST, BRIDGE, 1.0)
    assert b.expected_dc == a.expected_dc
    assert b.dc_out == pytest.approx(a.dc_out, rel=1e-6)


def test_suppression_rises_with_carrier_frequency():
    noise = NoiseSpec(0.0, 10e-6, 0)
    for seed in range(3):
        low = flicker_suppression_metric(ChopperConfig(duration=0.5, f_carrier=10e3),
                                         BRIDGE, 1.0, noise, seed)
        high = flicker_suppression_metric(ChopperConfig(duration=0.5, f_carrier=100e3),
                                          BRIDGE, 1.0, noise, seed)
        assert high >= low


def test_suppression_details_reports_both_errors():
    det = suppression_details(ChopperConfig(duration=0.5), BRIDGE, 1.0, NoiseSpec(0.0, 10e-6, 4))
    assert det.error_rms_baseline > det.error_rms_chopped > 0
    assert det.db == pytest.approx(20 * math.log10(det.error_rms_baseline / det.error_rms_chopped))


def test_white_noise_dc_std_prediction():
    d = 1e-5
    outs = [run_chain(FAST, BRIDGE, 0.0, NoiseSpec(d, 0.0, s)).dc_out for s in range(300)]
    assert np.std(outs, ddof=1) == pytest.approx(white_noise_dc_std(FAST, d), rel=0.15)


def test_carrier_for_matches_config():
    c = carrier_for(FAST)
    assert len(c) == FAST.n_samples
    assert tone_amplitude(c, FAST.f_carrier) == pytest.approx(FAST.v_carrier, rel=1e-12)
