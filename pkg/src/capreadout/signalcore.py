"""Waveforms, seeded noise sources, PSD estimation and the 4th-order low-pass.

Everything in here is shared by the oscillator and the chopper chains. Values
are immutable once built (sample arrays are flagged read-only) so they can be
passed between worker processes without defensive copies.

Seeding
-------
Every stochastic block draws from its own stream derived from
``(master seed, block label)`` via :class:`numpy.random.SeedSequence`, so
adding a new noise block never shifts the samples of an existing one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import AliasingError

SEED_MAX = 2**64 - 1
MIN_FLICKER_SAMPLES = 4096


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

def _label_key(label):
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean seed labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer seed label must be >= 0, got {label}")
        return (0, int(label))
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return (1,) + tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
    raise TypeError(f"seed labels must be str or int, got {type(label).__name__}")


def check_seed(seed):
    """Return ``seed`` as a Python int after checking it fits in 64 unsigned bits."""
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must lie in [0, 2**64 - 1], got {seed}")
    return seed


def _seed_sequence(master_seed, labels):
    key = []
    for label in labels:
        key.extend(_label_key(label))
    return np.random.SeedSequence(entropy=check_seed(master_seed), spawn_key=tuple(key))


def derive_seed(master_seed, *labels):
    """Derive a 64-bit child seed for the block named by ``labels``."""
    state = _seed_sequence(master_seed, labels).generate_state(1, np.uint64)
    return int(state[0])


def derive_rng(master_seed, *labels):
    """Independent ``numpy.random.Generator`` for the block named by ``labels``."""
    return np.random.Generator(np.random.PCG64(_seed_sequence(master_seed, labels)))


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

def _frozen_array(values):
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real signal in volts."""

    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "samples", _frozen_array(self.samples))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def times(self):
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples):
        """New waveform on the same time grid."""
        return Waveform(self.sample_rate, samples, self.t0)

    def mean_square(self):
        return float(np.mean(np.square(self.samples)))

    def rms(self):
        return math.sqrt(self.mean_square())


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectral density, V^2/Hz."""

    frequencies: np.ndarray
    psd: np.ndarray

    def __post_init__(self):
        f = _frozen_array(self.frequencies)
        p = _frozen_array(self.psd)
        if f.size != p.size:
            raise ValueError("frequencies and psd must have the same length")
        if f.size and (f[0] < 0 or np.any(np.diff(f) <= 0)):
            raise ValueError("frequencies must be >= 0 and strictly increasing")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("psd values must be finite and non-negative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "psd", p)

    @property
    def bin_width(self):
        return float(self.frequencies[1] - self.frequencies[0])

    def peak_frequency(self, fmin=0.0, fmax=math.inf):
        """Frequency of the largest PSD bin inside ``[fmin, fmax]``."""
        mask = (self.frequencies >= fmin) & (self.frequencies <= fmax)
        if not mask.any():
            raise ValueError(f"no bins in [{fmin}, {fmax}] Hz")
        idx = np.flatnonzero(mask)
        return float(self.frequencies[idx[np.argmax(self.psd[idx])]])

    def total_power(self):
        """Rectangle-rule integral of the PSD (V^2)."""
        return float(np.sum(self.psd) * self.bin_width)

    def band_power(self, fmin, fmax):
        mask = (self.frequencies >= fmin) & (self.frequencies <= fmax)
        return float(np.sum(self.psd[mask]) * self.bin_width)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive amplifier noise: white floor plus a 1/f component.

    ``white_density`` and ``flicker_a1hz`` are one-sided amplitude densities in
    V/sqrt(Hz); the flicker PSD is ``flicker_a1hz**2 / f``.
    """

    white_density: float = 0.0
    flicker_a1hz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("white_density", "flicker_a1hz"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "seed", check_seed(self.seed))

    @property
    def is_zero(self):
        return self.white_density == 0.0 and self.flicker_a1hz == 0.0

    def replace_seed(self, seed):
        return NoiseSpec(self.white_density, self.flicker_a1hz, seed)


@dataclass(frozen=True, eq=False)
class FilterStages:
    """Cascade of second-order sections in scipy ``sos`` layout.

    Each row is ``[b0, b1, b2, 1, a1, a2]``.
    """

    sos: np.ndarray
    cutoff: float
    sample_rate: float
    order: int = field(default=4)

    def __post_init__(self):
        sos = np.array(self.sos, dtype=float, copy=True)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise ValueError(f"sos must have shape (k, 6), got {sos.shape}")
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)

    def poles(self):
        """All poles, one row of two per section."""
        return np.array([np.roots(sec[3:]) for sec in self.sos])

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def dc_gain(self):
        gain = 1.0
        for sec in self.sos:
            gain *= (sec[0] + sec[1] + sec[2]) / (sec[3] + sec[4] + sec[5])
        return gain

    def frequency_response(self, freqs):
        """Complex response H(e^{j 2 pi f / fs}) evaluated directly from the coefficients."""
        z1 = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / self.sample_rate)
        h = np.ones_like(z1)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h = h * (b0 + b1 * z1 + b2 * z1 ** 2) / (a0 + a1 * z1 + a2 * z1 ** 2)
        return h

    def gain_db(self, freqs):
        return 20.0 * np.log10(np.abs(self.frequency_response(freqs)))


# ---------------------------------------------------------------------------
# signal sources
# ---------------------------------------------------------------------------

def _check_count(n):
    if int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n}")
    return int(n)


def sine(sample_rate, n, amplitude, freq, phase=0.0):
    """``amplitude * sin(2*pi*freq*k/sample_rate + phase)`` for k in [0, n)."""
    n = _check_count(n)
    if not 0 < freq < sample_rate / 2:
        raise AliasingError(
            f"tone at {freq} Hz is outside (0, Nyquist={sample_rate / 2}) Hz"
        )
    k = np.arange(n)
    return Waveform(sample_rate, amplitude * np.sin(2 * np.pi * freq * k / sample_rate + phase))


def constant(sample_rate, n, value):
    return Waveform(sample_rate, np.full(_check_count(n), float(value)))


def white_noise(sample_rate, n, density, seed):
    """Gaussian white noise with one-sided density ``density`` (V/sqrt(Hz)).

    The per-sample standard deviation is ``density * sqrt(sample_rate / 2)``.
    """
    n = _check_count(n)
    if not (math.isfinite(density) and density >= 0):
        raise ValueError(f"density must be finite and >= 0, got {density}")
    if density == 0:
        return Waveform(sample_rate, np.zeros(n))
    sigma = density * math.sqrt(sample_rate / 2.0)
    rng = derive_rng(seed, "white-noise")
    return Waveform(sample_rate, sigma * rng.standard_normal(n))


def flicker_noise(sample_rate, n, a1hz, seed):
    """Gaussian 1/f noise with one-sided PSD ``a1hz**2 / f``.

    Synthesised by spectral shaping: independent complex Gaussian bins scaled
    to the target PSD, then an inverse real FFT. The DC bin is zeroed so the
    record is exactly zero-mean; the lowest synthesised frequency is
    ``sample_rate / n``.
    """
    n = _check_count(n)
    if n < MIN_FLICKER_SAMPLES:
        raise ValueError(
            f"flicker synthesis needs n >= {MIN_FLICKER_SAMPLES} samples for two "
            f"decades of resolvable band, got {n}"
        )
    if not (math.isfinite(a1hz) and a1hz >= 0):
        raise ValueError(f"a1hz must be finite and >= 0, got {a1hz}")
    if a1hz == 0:
        return Waveform(sample_rate, np.zeros(n))

    rng = derive_rng(seed, "flicker-noise")
    n_bins = n // 2 + 1
    freqs = np.arange(1, n_bins) * (sample_rate / n)
    # E|X_k|^2 = S(f_k) * fs * n / 2 for the numpy irfft normalisation
    scale = np.sqrt(a1hz ** 2 / freqs * sample_rate * n / 2.0)
    draws = rng.standard_normal((2, n_bins - 1))
    spectrum = np.zeros(n_bins, dtype=complex)
    spectrum[1:] = scale * (draws[0] + 1j * draws[1]) / math.sqrt(2.0)
    if n % 2 == 0:
        spectrum[-1] = scale[-1] * draws[0, -1]
    return Waveform(sample_rate, np.fft.irfft(spectrum, n))


def amplifier_noise(sample_rate, n, noise: NoiseSpec, seed=None):
    """Sum of independent white and flicker processes described by ``noise``.

    ``seed`` overrides ``noise.seed``. The two components draw from separate
    derived streams so zeroing one leaves the other unchanged.
    """
    seed = noise.seed if seed is None else seed
    total = np.zeros(_check_count(n))
    if noise.white_density > 0:
        total += white_noise(sample_rate, n, noise.white_density, derive_seed(seed, "white")).samples
    if noise.flicker_a1hz > 0:
        total += flicker_noise(sample_rate, n, noise.flicker_a1hz, derive_seed(seed, "flicker")).samples
    return Waveform(sample_rate, total)


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

def estimate_psd(w: Waveform, segment_len, overlap_fraction=0.5):
    """Welch PSD estimate: Hann-tapered segments, averaged periodograms.

    The estimate is one-sided, density-scaled (V^2/Hz) and not detrended, so
    the integral over frequency matches the mean square of ``w`` (DC
    included).
    """
    segment_len = _check_count(segment_len)
    if segment_len > len(w):
        raise ValueError(f"segment_len {segment_len} exceeds waveform length {len(w)}")
    if not 0 <= overlap_fraction < 1:
        raise ValueError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    noverlap = min(int(round(overlap_fraction * segment_len)), segment_len - 1)
    freqs, psd = sps.welch(
        w.samples,
        fs=w.sample_rate,
        window="hann",
        nperseg=segment_len,
        noverlap=noverlap,
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    return Spectrum(freqs, np.maximum(psd, 0.0))


def psd_slope(spectrum: Spectrum, fmin, fmax):
    """Least-squares slope of log10(psd) against log10(f) over ``[fmin, fmax]``."""
    mask = (spectrum.frequencies >= fmin) & (spectrum.frequencies <= fmax) & (spectrum.psd > 0)
    if mask.sum() < 2:
        raise ValueError(f"fewer than two usable bins in [{fmin}, {fmax}] Hz")
    x = np.log10(spectrum.frequencies[mask])
    y = np.log10(spectrum.psd[mask])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def tone_amplitude(w: Waveform, freq):
    """Peak amplitude of the ``freq`` component, by quadrature projection.

    Uses the longest prefix of ``w`` spanning a whole number of periods.
    """
    periods = math.floor(len(w) * freq / w.sample_rate)
    if periods < 1:
        raise ValueError("waveform shorter than one period of the requested tone")
    m = int(round(periods * w.sample_rate / freq))
    m = min(m, len(w))
    t = np.arange(m) / w.sample_rate
    phasor = np.exp(-2j * np.pi * freq * t)
    return float(2.0 * abs(np.dot(w.samples[:m], phasor)) / m)


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------

# Q of the two conjugate pole pairs of a 4th-order maximally flat prototype
_BUTTER4_Q = (1.0 / (2.0 * math.cos(math.pi / 8)), 1.0 / (2.0 * math.cos(3 * math.pi / 8)))


def design_lowpass_4th(cutoff, sample_rate):
    """4th-order Butterworth low-pass as two biquads (bilinear, prewarped).

    Each section's numerator is scaled from its own denominator sum so the
    DC gain is unity to rounding, however small ``cutoff / sample_rate`` is.
    """
    if not 0 < cutoff < sample_rate / 2:
        raise AliasingError(f"cutoff {cutoff} Hz outside (0, Nyquist={sample_rate / 2}) Hz")
    k = math.tan(math.pi * cutoff / sample_rate)
    k2 = k * k
    rows = []
    for q in _BUTTER4_Q:
        norm = 1.0 + k / q + k2
        a1 = 2.0 * (k2 - 1.0) / norm
        a2 = (1.0 - k / q + k2) / norm
        b0 = (1.0 + a1 + a2) / 4.0
        rows.append([b0, 2.0 * b0, b0, 1.0, a1, a2])
    return FilterStages(np.array(rows), float(cutoff), float(sample_rate), 4)


def filter_apply(stages: FilterStages, w: Waveform):
    """Run ``w`` through the cascade from zero initial state."""
    if not math.isclose(stages.sample_rate, w.sample_rate, rel_tol=1e-12):
        raise ValueError(
            f"filter designed for {stages.sample_rate} Hz applied to a "
            f"{w.sample_rate} Hz waveform"
        )
    return w.with_samples(sps.sosfilt(np.array(stages.sos), w.samples))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y):
    """Ordinary least squares ``y = slope*x + intercept`` on centred data."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("linear_fit needs two equal-length arrays of >= 2 points")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.dot(dx, dx))
    if sxx == 0:
        raise ValueError("x values are all identical")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = float(ym - slope * xm)
    ss_tot = float(np.dot(dy, dy))
    resid = dy - slope * dx
    ss_res = float(np.dot(resid, resid))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope, intercept, r2)
