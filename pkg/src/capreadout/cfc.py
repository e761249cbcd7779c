"""Capacitance-to-frequency converter: 555-style relaxation oscillator.

A symmetric current source charges and discharges ``C_0 + C_S`` between the
one-third and two-thirds supply thresholds, giving the cycle time

    T = 2 * (high - low) * V_S / I * (C_0 + C_S)

which reduces to ``2 V_S (C_0 + C_S) / (3 I)`` for the default thresholds.
A microcontroller counts whole cycles inside a fixed gate window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError, StallError
from .signalcore import MIN_FLICKER_SAMPLES, NoiseSpec, amplifier_noise, linear_fit

# dt must resolve each cycle into at least this many steps
MIN_STEPS_PER_CYCLE = 200
# half-cycle search gives up after this many analytic periods
STALL_PERIODS = 10.0
# relative slack when an edge lands exactly on a gate boundary
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class CfcConfig:
    v_supply: float = 5.0
    charge_current: float = 40e-6
    c_parallel: float = 0.0
    gate_time: float = 10e-3
    threshold_low_fraction: float = 1.0 / 3.0
    threshold_high_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        checks = (
            ("v_supply", self.v_supply > 0),
            ("charge_current", self.charge_current > 0),
            ("c_parallel", self.c_parallel >= 0),
            ("gate_time", self.gate_time > 0),
        )
        for name, ok in checks:
            value = getattr(self, name)
            if not (ok and math.isfinite(value)):
                raise ValueError(f"{name} out of range: {value!r}")
        if not 0 < self.threshold_low_fraction < self.threshold_high_fraction < 1:
            raise ValueError(
                "thresholds need 0 < threshold_low_fraction < threshold_high_fraction < 1, got "
                f"{self.threshold_low_fraction!r}, {self.threshold_high_fraction!r}"
            )

    @property
    def seconds_per_farad(self):
        """dT/dC of the cycle-time law."""
        swing = self.threshold_high_fraction - self.threshold_low_fraction
        return 2.0 * swing * self.v_supply / self.charge_current


@dataclass(frozen=True, eq=False)
class CfcResult:
    cycle_times: np.ndarray
    charge_times: np.ndarray
    discharge_times: np.ndarray
    mean_frequency: float
    counted_frequency: float
    count: int
    gate_time: float

    @property
    def mean_cycle_time(self):
        return float(np.mean(self.cycle_times))


@dataclass(frozen=True)
class TransferPoint:
    capacitance: float
    cycle_time: float
    frequency: float
    transient_cycle_time: float | None = None


def cycle_time_analytic(cfg: CfcConfig, c_sense):
    if not c_sense >= 0:
        raise ValueError(f"sensing capacitance must be >= 0, got {c_sense!r}")
    return cfg.seconds_per_farad * (cfg.c_parallel + c_sense)


def count_cycles(cycle_times, gate_time, gate_start=0.0):
    """Gate-time counter over a stream of back-to-back cycles starting at t=0.

    Counts cycles whose end instant falls in ``(gate_start, gate_start +
    gate_time]``. Returns ``(count, count / gate_time)``.
    """
    cycles = np.asarray(cycle_times, dtype=float).reshape(-1)
    if cycles.size == 0:
        raise ValueError("cannot count an empty cycle stream")
    if not gate_time > 0:
        raise ValueError(f"gate_time must be > 0, got {gate_time!r}")
    if gate_start < 0:
        raise ValueError(f"gate_start must be >= 0, got {gate_start!r}")
    ends = np.cumsum(cycles)
    gate_end = gate_start + gate_time
    eps = _EDGE_TOL * gate_time
    if ends[-1] < gate_end - eps:
        raise ValueError(
            f"cycle stream ends at {ends[-1]:.6g} s, before the gate closes at {gate_end:.6g} s"
        )
    count = int(np.count_nonzero((ends > gate_start + eps) & (ends <= gate_end + eps)))
    return count, count / gate_time


def _half_cycle(t_s, v_s, direction, target, slope, v_max, dt, chunk, limit_time, noise):
    """Ramp from ``(t_s, v_s)`` until the sensed voltage crosses ``target``.

    Returns the interpolated crossing instant.
    """
    k_next = math.floor(t_s / dt) + 1
    t_prev, s_prev = t_s, v_s
    while True:
        k = np.arange(k_next, k_next + chunk)
        t = k * dt
        if t[0] > limit_time:
            raise StallError(
                f"comparator did not toggle within {STALL_PERIODS:g} periods after t={t_s:.6g} s"
            )
        v = np.clip(v_s + direction * slope * (t - t_s), 0.0, v_max)
        if noise is not None:
            if k[-1] >= noise.size:
                raise StallError("oscillator ran past the pre-generated noise record")
            v = v + noise[k]
        hit = v >= target if direction > 0 else v <= target
        if hit.any():
            i = int(np.argmax(hit))
            if i > 0:
                t_prev, s_prev = t[i - 1], v[i - 1]
            denom = v[i] - s_prev
            frac = 1.0 if denom == 0 else (target - s_prev) / denom
            return t_prev + (t[i] - t_prev) * min(max(frac, 0.0), 1.0)
        t_prev, s_prev = t[-1], v[-1]
        k_next += chunk


def simulate_transient(cfg: CfcConfig, c_sense, noise: NoiseSpec | None = None, dt=None,
                       n_cycles=1, seed=None):
    """Time-stepped oscillator: the independent check on the analytic law.

    The capacitor voltage ramps at ``+-I/C`` and is sampled every ``dt``.
    Optional noise is added to the sampled voltage before it reaches the
    comparators, and each crossing instant is refined by linear
    interpolation between the bracketing samples; the current reverses at
    that instant. The run starts at the low threshold on a charging edge
    and continues until ``n_cycles`` cycles are complete and the counter
    gate is covered.

    Args:
        cfg: oscillator configuration.
        c_sense: sensor capacitance in farads.
        noise: comparator-input noise; ``None`` or all-zero means noiseless.
        dt: time step, at most ``T/200``; defaults to ``T/1000``.
        n_cycles: minimum number of full cycles to simulate.
        seed: overrides ``noise.seed``.
    """
    period = cycle_time_analytic(cfg, c_sense)
    if period <= 0:
        raise ValueError("total capacitance is zero; the oscillator has no period")
    if dt is None:
        dt = period / 1000.0
    if not dt > 0:
        raise ResolutionError(f"dt must be > 0, got {dt!r}")
    if dt > period / MIN_STEPS_PER_CYCLE * (1 + 1e-12):
        raise ResolutionError(
            f"dt={dt:.3g} s is coarser than T/{MIN_STEPS_PER_CYCLE} = "
            f"{period / MIN_STEPS_PER_CYCLE:.3g} s"
        )
    if int(n_cycles) != n_cycles or n_cycles < 1:
        raise ValueError(f"n_cycles must be a positive integer, got {n_cycles!r}")

    c_total = cfg.c_parallel + c_sense
    slope = cfg.charge_current / c_total
    v_low = cfg.threshold_low_fraction * cfg.v_supply
    v_high = cfg.threshold_high_fraction * cfg.v_supply
    need = max(n_cycles * period, cfg.gate_time)

    noise_samples = None
    if noise is not None and not noise.is_zero:
        n_noise = math.ceil((need + (STALL_PERIODS + 2) * period) / dt) + 2
        noise_samples = amplifier_noise(1.0 / dt, max(n_noise, MIN_FLICKER_SAMPLES), noise, seed).samples

    chunk = int(0.75 * period / dt) + 2
    t_s, v_s = 0.0, v_low
    starts = [0.0]
    charge, discharge = [], []
    while True:
        t_hi = _half_cycle(t_s, v_s, +1, v_high, slope, cfg.v_supply, dt, chunk,
                           t_s + STALL_PERIODS * period, noise_samples)
        v_hi = min(v_s + slope * (t_hi - t_s), cfg.v_supply)
        t_lo = _half_cycle(t_hi, v_hi, -1, v_low, slope, cfg.v_supply, dt, chunk,
                           t_hi + STALL_PERIODS * period, noise_samples)
        v_s = max(v_hi - slope * (t_lo - t_hi), 0.0)
        charge.append(t_hi - t_s)
        discharge.append(t_lo - t_hi)
        starts.append(t_lo)
        t_s = t_lo
        if len(charge) >= n_cycles and t_lo >= need:
            break

    cycles = np.diff(np.array(starts))
    count, counted = count_cycles(cycles, cfg.gate_time)
    return CfcResult(
        cycle_times=cycles,
        charge_times=np.array(charge),
        discharge_times=np.array(discharge),
        mean_frequency=1.0 / float(np.mean(cycles)),
        counted_frequency=counted,
        count=count,
        gate_time=cfg.gate_time,
    )


def sweep_transfer(cfg: CfcConfig, c_values, confirm_transient=False, dt_fraction=1e-3):
    """Transfer characteristic T(C), one row per input capacitance, input order kept.

    With ``confirm_transient`` each row also carries the mean cycle time of a
    noiseless transient run at ``dt = T * dt_fraction``.
    """
    rows = []
    for c in c_values:
        t = cycle_time_analytic(cfg, c)
        freq = 1.0 / t if t > 0 else math.inf
        t_sim = None
        if confirm_transient:
            t_sim = simulate_transient(cfg, c, dt=t * dt_fraction).mean_cycle_time
        rows.append(TransferPoint(float(c), t, freq, t_sim))
    return rows


def fit_transfer(rows):
    """Least-squares line through (capacitance, cycle_time)."""
    return linear_fit([r.capacitance for r in rows], [r.cycle_time for r in rows])


def log_spaced_capacitances(c_min=18e-12, c_max=1e-9, n=20):
    return [float(c) for c in np.geomspace(c_min, c_max, n)]


def counter_resolution(cfg: CfcConfig, c_sense):
    """Capacitance step that moves the counted frequency by one LSB (1/gate_time).

    From ``f = 1/(k C)``: ``dC = k C**2 / gate_time`` with ``C = C_0 + C_S``.
    """
    c_total = cfg.c_parallel + c_sense
    return cfg.seconds_per_farad * c_total ** 2 / cfg.gate_time
