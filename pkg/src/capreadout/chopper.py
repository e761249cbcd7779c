"""Chopper-stabilised read-out chain for a differential capacitive half-bridge.

Signal path::

    carrier v_M -> half-bridge + charge amplifiers -> (+ amplifier noise)
      -> instrumentation amp (v_y) -> multiplier (v_z) -> 4th-order LPF (v_out)

Low-frequency amplifier noise enters after the bridge has moved the signal
up to the carrier; the multiplier brings the signal back to DC and pushes
the noise up to the carrier, where the low-pass removes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensors import AccelHalfBridge, halfbridge_capacitances
from .signalcore import (
    NoiseSpec,
    Waveform,
    amplifier_noise,
    constant,
    derive_seed,
    design_lowpass_4th,
    filter_apply,
    sine,
    tone_amplitude,
)


@dataclass(frozen=True)
class ChopperConfig:
    """Chain parameters. Defaults put two decades between the signal band,
    the carrier and Nyquist."""

    v_carrier: float = 1.0
    f_carrier: float = 10e3
    c_integrate: float = 5e-12
    instr_gain: float = 1.0
    demod_scale: float = 1.0
    lpf_cutoff: float = 100.0
    sample_rate: float = 1e6
    duration: float = 0.2
    settle_fraction: float = 0.5
    parasitic_plus: float = 0.0
    parasitic_minus: float = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not self.v_carrier > 0:
            raise ValueError(f"v_carrier must be > 0, got {self.v_carrier!r}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate!r}")
        if not 0 < self.f_carrier < self.sample_rate / 2:
            raise ValueError(
                f"f_carrier must lie in (0, sample_rate/2 = {self.sample_rate / 2}), "
                f"got {self.f_carrier!r}"
            )
        if not self.c_integrate > 0:
            raise ValueError(f"c_integrate must be > 0, got {self.c_integrate!r}")
        if not 0 < self.lpf_cutoff < self.f_carrier / 5:
            raise ValueError(
                f"lpf_cutoff must lie in (0, f_carrier/5 = {self.f_carrier / 5}), "
                f"got {self.lpf_cutoff!r}"
            )
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration!r}")
        if not 0 < self.settle_fraction < 1:
            raise ValueError(f"settle_fraction must lie in (0, 1), got {self.settle_fraction!r}")
        if self.parasitic_plus < 0 or self.parasitic_minus < 0:
            raise ValueError("parasitic capacitances must be >= 0")

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    @property
    def volts_per_farad(self):
        """Ideal DC output per farad of bridge imbalance ΔC."""
        return (self.demod_scale * self.instr_gain * self.v_carrier ** 2 / 2.0
                * 2.0 / self.c_integrate)


@dataclass(frozen=True, eq=False)
class ChopperResult:
    v_y: Waveform
    v_z: Waveform
    v_out: Waveform
    dc_out: float
    expected_dc: float
    f_carrier: float

    @property
    def modulated_amplitude(self):
        """Carrier-frequency amplitude of the instrumentation-amp output."""
        return tone_amplitude(self.v_y, self.f_carrier)


@dataclass(frozen=True)
class SuppressionResult:
    error_rms_chopped: float
    error_rms_baseline: float

    @property
    def db(self):
        if self.error_rms_chopped == 0:
            return math.inf
        return 20.0 * math.log10(self.error_rms_baseline / self.error_rms_chopped)


def _same_grid(a: Waveform, b: Waveform):
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise ValueError(
            f"waveform mismatch: {len(a)} samples @ {a.sample_rate} Hz vs "
            f"{len(b)} samples @ {b.sample_rate} Hz"
        )


def charge_amp(carrier: Waveform, c_plus, c_minus, c_integrate):
    """Differential charge amplifier outputs ``(v_y_plus, v_y_minus)``.

    ``v_y_plus`` integrates the charge through the *decreasing* half
    (``c_minus``) and ``v_y_minus`` through the increasing one, both inverted.
    Capacitances may be scalars or per-sample arrays.
    """
    if not c_integrate > 0:
        raise ValueError(f"c_integrate must be > 0, got {c_integrate!r}")
    if np.any(np.asarray(c_plus) <= 0) or np.any(np.asarray(c_minus) <= 0):
        raise ValueError("bridge capacitances must be positive")
    x = carrier.samples
    return (carrier.with_samples(-x * (np.asarray(c_minus) / c_integrate)),
            carrier.with_samples(-x * (np.asarray(c_plus) / c_integrate)))


def instr_amp(v_y_plus: Waveform, v_y_minus: Waveform, gain=1.0):
    _same_grid(v_y_plus, v_y_minus)
    return v_y_plus.with_samples(gain * (v_y_plus.samples - v_y_minus.samples))


def demodulate(v_y: Waveform, carrier: Waveform, demod_scale=1.0):
    """Ideal analog multiplier: ``demod_scale * v_y * carrier``."""
    _same_grid(v_y, carrier)
    return v_y.with_samples(demod_scale * v_y.samples * carrier.samples)


def settle_index(n, settle_fraction):
    if not 0 < settle_fraction < 1:
        raise ValueError(f"settle_fraction must lie in (0, 1), got {settle_fraction!r}")
    return math.ceil(settle_fraction * n)


def dc_estimate(w: Waveform, settle_fraction=0.5):
    """Mean of the samples from ``settle_fraction * len(w)`` onwards."""
    start = settle_index(len(w), settle_fraction)
    if start >= len(w):
        raise ValueError("post-settle window is empty")
    return float(np.mean(w.samples[start:]))


def _chain(cfg: ChopperConfig, bridge: AccelHalfBridge, accel, noise, seed, excitation):
    n = len(excitation)
    c_plus, c_minus = halfbridge_capacitances(bridge, accel)
    c_plus = c_plus + cfg.parasitic_plus
    c_minus = c_minus + cfg.parasitic_minus
    v_yp, v_ym = charge_amp(excitation, c_plus, c_minus, cfg.c_integrate)
    if noise is not None and not noise.is_zero:
        seed = noise.seed if seed is None else seed
        injected = amplifier_noise(cfg.sample_rate, n, noise, derive_seed(seed, "instr-amp-input"))
        v_yp = v_yp.with_samples(v_yp.samples + injected.samples)
    v_y = instr_amp(v_yp, v_ym, cfg.instr_gain)
    v_z = demodulate(v_y, excitation, cfg.demod_scale)
    v_out = filter_apply(design_lowpass_4th(cfg.lpf_cutoff, cfg.sample_rate), v_z)

    a = np.asarray(accel, dtype=float)
    if a.ndim:
        a = a[settle_index(n, cfg.settle_fraction):].mean()
    expected = cfg.volts_per_farad * bridge.sensitivity * float(a)
    return ChopperResult(v_y, v_z, v_out, dc_estimate(v_out, cfg.settle_fraction),
                         expected, cfg.f_carrier)


def carrier_for(cfg: ChopperConfig):
    return sine(cfg.sample_rate, cfg.n_samples, cfg.v_carrier, cfg.f_carrier)


def run_chain(cfg: ChopperConfig, bridge: AccelHalfBridge, accel,
              noise: NoiseSpec | None = None, seed=None):
    """Simulate the full chain for a constant acceleration (in g).

    ``accel`` may instead be an array with one value per sample for
    time-varying excitation; ``expected_dc`` then uses its mean over the
    post-settle window. ``seed`` overrides ``noise.seed``.
    """
    accel_arr = np.asarray(accel, dtype=float)
    if accel_arr.ndim and accel_arr.size != cfg.n_samples:
        raise ValueError(f"accel profile has {accel_arr.size} samples, chain has {cfg.n_samples}")
    return _chain(cfg, bridge, accel, noise, seed, carrier_for(cfg))


def run_baseline(cfg: ChopperConfig, bridge: AccelHalfBridge, accel,
                 noise: NoiseSpec | None = None, seed=None):
    """Same chain without modulation.

    The bridge is driven, and the multiplier referenced, by a DC level equal
    to the carrier RMS (``v_carrier / sqrt(2)``). That keeps the excitation
    power and the ideal output identical to the chopped chain, so the two
    differ only in where the signal sits relative to the amplifier noise.
    """
    level = cfg.v_carrier / math.sqrt(2.0)
    return _chain(cfg, bridge, accel, noise, seed, constant(cfg.sample_rate, cfg.n_samples, level))


def _window_error_rms(result: ChopperResult, settle_fraction):
    start = settle_index(len(result.v_out), settle_fraction)
    err = result.v_out.samples[start:] - result.expected_dc
    return float(np.sqrt(np.mean(err * err)))


def suppression_details(cfg: ChopperConfig, bridge: AccelHalfBridge, accel,
                        noise: NoiseSpec, seed=None):
    if noise is None or noise.is_zero:
        raise ValueError("suppression metric is undefined without injected noise")
    chopped = run_chain(cfg, bridge, accel, noise, seed)
    baseline = run_baseline(cfg, bridge, accel, noise, seed)
    return SuppressionResult(
        error_rms_chopped=_window_error_rms(chopped, cfg.settle_fraction),
        error_rms_baseline=_window_error_rms(baseline, cfg.settle_fraction),
    )


def flicker_suppression_metric(cfg: ChopperConfig, bridge: AccelHalfBridge, accel,
                               noise: NoiseSpec, seed=None):
    """Output-error advantage of chopping over the unmodulated chain, in dB.

    Both chains see the same noise realisation; the error is the LPF output
    over the post-settle window minus the ideal output.
    """
    return suppression_details(cfg, bridge, accel, noise, seed).db


def white_noise_dc_std(cfg: ChopperConfig, white_density):
    """Predicted standard deviation of ``dc_out`` from white input noise alone.

    Multiplying white noise of one-sided density ``d`` by the carrier leaves
    a two-sided density of ``(s*g*V*d)**2 / 4`` near DC; averaging over the
    post-settle window of length ``T`` gives ``s*g*V*d / (2*sqrt(T))``.
    """
    n = cfg.n_samples
    window = (n - settle_index(n, cfg.settle_fraction)) / cfg.sample_rate
    return (abs(cfg.demod_scale * cfg.instr_gain) * cfg.v_carrier * white_density
            / (2.0 * math.sqrt(window)))
