"""Monte Carlo over device spread, sample statistics and the interface comparison."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cfc, chopper
from .errors import SampleFailure
from .sensors import AccelHalfBridge
from .signalcore import NoiseSpec, check_seed, derive_rng, derive_seed, linear_fit

CFC_STAGES = ("oscillator", "counter")
CHOPPER_STAGES = ("carrier", "charge amplifier", "instrumentation amplifier", "demodulator",
                  "low-pass filter")

# noise used by compare_interfaces when the caller gives none
DEFAULT_COMPARE_NOISE = NoiseSpec(white_density=20e-9, flicker_a1hz=1e-6)


@dataclass(frozen=True)
class SampleStats:
    mean: float
    std: float
    cv: float
    per_sample: tuple

    def report(self, scale=1e3, unit="mV"):
        """``"58.44 mV, 2.79 mV (4.77 %)"`` style summary."""
        return (f"{self.mean * scale:.2f} {unit}, {self.std * scale:.2f} {unit} "
                f"({self.cv * 100:.2f} %)")


def stats(values):
    """Sample mean, (n-1) standard deviation and coefficient of variation.

    Deviations are taken from the first value before averaging, which keeps
    a constant list at exactly zero spread.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size < 2:
        raise ValueError(f"need at least 2 values, got {v.size}")
    d = v - v[0]
    dm = float(np.mean(d))
    r = d - dm
    std = math.sqrt(float(np.dot(r, r)) / (v.size - 1))
    mean = float(v[0] + dm)
    cv = std / abs(mean) if mean != 0 else math.nan
    return SampleStats(mean, std, cv, tuple(float(x) for x in v))


@dataclass(frozen=True)
class MonteCarloSpec:
    n_samples: int = 9
    rel_spread_sensitivity: float = 0.0
    rel_spread_c_rest: float = 0.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ValueError(f"n_samples must be an integer >= 2, got {self.n_samples!r}")
        for name in ("rel_spread_sensitivity", "rel_spread_c_rest"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        object.__setattr__(self, "master_seed", check_seed(self.master_seed))


@dataclass(frozen=True)
class MonteCarloSample:
    index: int
    sensitivity: float
    c_rest: float
    dc_out: float


def draw_device(bridge: AccelHalfBridge, spec: MonteCarloSpec, index):
    """Perturbed bridge and noise seed for device ``index``.

    Both come from streams keyed on ``(master_seed, index)``, so a sample's
    draw does not depend on how many others exist or which worker runs it.
    """
    z = derive_rng(spec.master_seed, "device", index).standard_normal(2)
    device = AccelHalfBridge(
        c_rest=bridge.c_rest * (1.0 + spec.rel_spread_c_rest * z[1]),
        sensitivity=bridge.sensitivity * (1.0 + spec.rel_spread_sensitivity * z[0]),
    )
    return device, derive_seed(spec.master_seed, "noise", index)


def _run_sample(args):
    cfg, bridge, accel, spec, index = args
    try:
        device, noise_seed = draw_device(bridge, spec, index)
        result = chopper.run_chain(cfg, device, accel, spec.noise, noise_seed)
    except Exception as exc:  # noqa: BLE001 - re-raised with the sample index
        raise SampleFailure(index, exc) from exc
    return MonteCarloSample(index, device.sensitivity, device.c_rest, result.dc_out)


def montecarlo_samples(cfg: chopper.ChopperConfig, bridge: AccelHalfBridge, accel,
                       spec: MonteCarloSpec, workers=None):
    """Run the chopper chain once per simulated device; results in index order."""
    jobs = [(cfg, bridge, accel, spec, i) for i in range(spec.n_samples)]
    if workers is None or workers <= 1:
        return [_run_sample(job) for job in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_sample, jobs, chunksize=chunk))


def montecarlo_chopper(cfg: chopper.ChopperConfig, bridge: AccelHalfBridge, accel,
                       spec: MonteCarloSpec, workers=None):
    samples = montecarlo_samples(cfg, bridge, accel, spec, workers)
    return stats([s.dc_out for s in samples])


@dataclass(frozen=True)
class InterfaceRow:
    name: str
    capacitance_range: tuple
    smallest_resolvable: float
    linearity_r2: float
    stage_count: int
    noise_robustness_db: float | None = None

    @property
    def range_width(self):
        return self.capacitance_range[1] - self.capacitance_range[0]


@dataclass(frozen=True)
class ComparisonReport:
    cfc: InterfaceRow
    chopper: InterfaceRow

    @property
    def rows(self):
        return (self.cfc, self.chopper)

    def checks(self):
        """The three orderings the comparison is meant to show."""
        return {
            "cfc range wider": self.cfc.range_width > self.chopper.range_width,
            "chopper more accurate": self.chopper.smallest_resolvable < self.cfc.smallest_resolvable,
            "chopper more complex": self.chopper.stage_count > self.cfc.stage_count,
        }

    def render(self):
        lines = [f"{'interface':<10} {'range [F]':<25} {'resolution [F]':>14} "
                 f"{'R^2':>12} {'stages':>6} {'noise rob. [dB]':>15}"]
        for row in self.rows:
            lo, hi = row.capacitance_range
            db = "n/a" if row.noise_robustness_db is None else f"{row.noise_robustness_db:.1f}"
            lines.append(f"{row.name:<10} {f'{lo:.3e} .. {hi:.3e}':<25} "
                         f"{row.smallest_resolvable:>14.3e} {row.linearity_r2:>12.9f} "
                         f"{row.stage_count:>6d} {db:>15}")
        for label, ok in self.checks().items():
            lines.append(f"{label}: {'yes' if ok else 'NO'}")
        return "\n".join(lines)


def chopper_noise_floor(cfg: chopper.ChopperConfig, bridge: AccelHalfBridge, noise: NoiseSpec,
                        seed=0, n_runs=16):
    """Standard deviation of ``dc_out`` at zero acceleration over independent noise runs."""
    values = [chopper.run_chain(cfg, bridge, 0.0, noise, derive_seed(seed, "noise-floor", i)).dc_out
              for i in range(n_runs)]
    return stats(values).std


def compare_interfaces(cfc_cfg: cfc.CfcConfig, ch_cfg: chopper.ChopperConfig,
                       bridge: AccelHalfBridge | None = None, noise: NoiseSpec | None = None,
                       c_min=18e-12, c_max=1e-9, n_points=20, accel=1.0, seed=0,
                       n_noise_runs=16):
    """Build the two-row comparison.

    Oscillator row: range and R^2 from a log-spaced sweep; resolution is the
    capacitance step worth one counter LSB at ``c_min`` (its best case).
    Chopper row: resolution is the imbalance whose DC output equals three
    noise-floor standard deviations; the range runs from there to the bridge
    over-range limit ``c_rest``.
    """
    bridge = bridge or AccelHalfBridge()
    noise = noise or DEFAULT_COMPARE_NOISE

    rows = cfc.sweep_transfer(cfc_cfg, cfc.log_spaced_capacitances(c_min, c_max, n_points))
    cfc_row = InterfaceRow(
        name="cfc",
        capacitance_range=(rows[0].capacitance, rows[-1].capacitance),
        smallest_resolvable=cfc.counter_resolution(cfc_cfg, c_min),
        linearity_r2=cfc.fit_transfer(rows).r2,
        stage_count=len(CFC_STAGES),
    )

    floor = chopper_noise_floor(ch_cfg, bridge, noise, seed, n_noise_runs)
    resolvable = 3.0 * floor / ch_cfg.volts_per_farad
    levels = (0.25, 0.5, 1.0, 2.0)
    outs = [chopper.run_chain(ch_cfg, bridge, a).dc_out for a in levels]
    chopper_row = InterfaceRow(
        name="chopper",
        capacitance_range=(resolvable, bridge.c_rest),
        smallest_resolvable=resolvable,
        linearity_r2=linear_fit(levels, outs).r2,
        stage_count=len(CHOPPER_STAGES),
        noise_robustness_db=chopper.flicker_suppression_metric(
            ch_cfg, bridge, accel, noise, derive_seed(seed, "suppression")),
    )
    return ComparisonReport(cfc_row, chopper_row)
