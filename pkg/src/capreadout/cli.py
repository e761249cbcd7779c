"""Command-line front end.

Each subcommand runs one experiment, writes CSV files plus ``summary.txt``
into ``--out`` and echoes the summary to stdout. Configuration is a YAML
file whose sections override the built-in defaults (see ``DEFAULTS`` or run
any subcommand with ``--print-config``).
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import cfc, chopper, harness
from .sensors import AccelHalfBridge
from .signalcore import NoiseSpec, amplifier_noise, check_seed, derive_seed, estimate_psd

EXPERIMENTS = ("cfc-sweep", "cfc-transient", "chopper-run", "chopper-suppression",
               "montecarlo", "compare", "psd")
STOCHASTIC = frozenset(EXPERIMENTS) - {"cfc-sweep"}

DEFAULTS = {
    "seed": 0,
    "cfc": {f.name: f.default for f in dataclasses.fields(cfc.CfcConfig)},
    "chopper": {f.name: f.default for f in dataclasses.fields(chopper.ChopperConfig)},
    "bridge": {f.name: f.default for f in dataclasses.fields(AccelHalfBridge)},
    "sweep": {"c_min": 18e-12, "c_max": 1e-9, "n_points": 20},
    "transient": {
        "dt_fraction": 1e-3,
        "n_cycles": 10,
        "noise": {"white_density": 0.0, "flicker_a1hz": 0.0},
    },
    "chopper_run": {
        "accel_g": 1.0,
        "decimate": 100,
        "noise": {"white_density": 0.0, "flicker_a1hz": 0.0},
    },
    "suppression": {
        "accel_g": 1.0,
        "duration": 1.0,
        "carrier_frequencies": [10e3, 100e3],
        "noise": {"white_density": 0.0, "flicker_a1hz": 10e-6},
    },
    "montecarlo": {
        "accel_g": 1.0,
        "n_samples": 9,
        "rel_spread_sensitivity": 0.0477,
        "rel_spread_c_rest": 0.0,
        "workers": 1,
        "noise": {"white_density": 0.0, "flicker_a1hz": 0.0},
    },
    "compare": {
        "accel_g": 1.0,
        "n_noise_runs": 16,
        "noise": {"white_density": harness.DEFAULT_COMPARE_NOISE.white_density,
                  "flicker_a1hz": harness.DEFAULT_COMPARE_NOISE.flicker_a1hz},
    },
    "psd": {
        "source": "v_y",
        "accel_g": 1.0,
        "segment_len": 65536,
        "overlap_fraction": 0.5,
        "noise": {"white_density": 0.0, "flicker_a1hz": 10e-6},
    },
}

PSD_SOURCES = ("noise", "v_y", "v_z", "v_out")

# which sections each experiment reads
SECTIONS = {
    "cfc-sweep": ("cfc", "sweep"),
    "cfc-transient": ("cfc", "sweep", "transient"),
    "chopper-run": ("chopper", "bridge", "chopper_run"),
    "chopper-suppression": ("chopper", "bridge", "suppression"),
    "montecarlo": ("chopper", "bridge", "montecarlo"),
    "compare": ("cfc", "chopper", "bridge", "sweep", "compare"),
    "psd": ("chopper", "bridge", "psd"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kind: str
    sections: dict
    out_dir: Path
    seed: int

    def section(self, name):
        return self.sections[name]


def _merge(base, override, path):
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config field '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config field '{where}' must be a mapping")
            _merge(base[key], value, where)
        else:
            base[key] = _coerce(base[key], value, where)


def _coerce(default, value, where):
    # PyYAML reads "1e-12" (no dot) as a string, so numbers are coerced here
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, list):
            return [float(v) for v in value]
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config field '{where}' has invalid value {value!r}") from None
    return value


def load_run_config(kind, config_path=None, seed=None, out_dir="."):
    data = copy.deepcopy(DEFAULTS)
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping at top level")
        _merge(data, loaded, "")
    if seed is not None:
        data["seed"] = seed
    if kind in STOCHASTIC and data.get("seed") is None:
        raise ConfigError(f"experiment '{kind}' needs a seed")
    try:
        seed_value = check_seed(data["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field 'seed': {exc}") from None
    return RunConfig(kind, data, Path(out_dir), seed_value)


def _build(cls, params, section):
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{section}': {exc}") from None


def _noise(params, section, seed):
    return _build(NoiseSpec, dict(params, seed=seed), f"{section}.noise")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# experiments: each returns (summary lines, {filename: (header, rows)})
# ---------------------------------------------------------------------------

def _sweep_values(rc):
    sw = rc.section("sweep")
    return cfc.log_spaced_capacitances(sw["c_min"], sw["c_max"], sw["n_points"])


def run_cfc_sweep(rc):
    cfg = _build(cfc.CfcConfig, rc.section("cfc"), "cfc")
    rows = cfc.sweep_transfer(cfg, _sweep_values(rc))
    fit = cfc.fit_transfer(rows) if len(rows) >= 2 else None
    lines = [f"cfc-sweep: {len(rows)} points"]
    if fit is not None:
        lines += [
            f"fitted slope: {fit.slope:.9e} s/F (analytic {cfg.seconds_per_farad:.9e} s/F)",
            f"R^2: {fit.r2:.12f}",
        ]
    table = [(r.capacitance, r.cycle_time, r.frequency) for r in rows]
    return lines, {"sweep.csv": (("capacitance_f", "cycle_time_s", "frequency_hz"), table)}


def run_cfc_transient(rc):
    cfg = _build(cfc.CfcConfig, rc.section("cfc"), "cfc")
    tr = rc.section("transient")
    noise = _noise(tr["noise"], "transient", rc.seed)
    table, worst = [], 0.0
    for i, c in enumerate(_sweep_values(rc)):
        t_ref = cfc.cycle_time_analytic(cfg, c)
        res = cfc.simulate_transient(cfg, c, noise, dt=t_ref * tr["dt_fraction"],
                                     n_cycles=tr["n_cycles"], seed=derive_seed(rc.seed, "transient", i))
        rel = (res.mean_cycle_time - t_ref) / t_ref
        worst = max(worst, abs(rel))
        jitter = float(np.std(res.cycle_times, ddof=1)) if len(res.cycle_times) > 1 else 0.0
        table.append((c, t_ref, res.mean_cycle_time, rel, jitter, len(res.cycle_times),
                      res.count, res.counted_frequency))
    header = ("capacitance_f", "analytic_cycle_time_s", "mean_cycle_time_s", "relative_error",
              "jitter_std_s", "cycles", "count", "counted_frequency_hz")
    lines = [f"cfc-transient: {len(table)} capacitances",
             f"worst |relative error| vs analytic: {worst:.3e}"]
    return lines, {"transient.csv": (header, table)}


def _chopper_cfg(rc, **overrides):
    params = dict(rc.section("chopper"), **overrides)
    return _build(chopper.ChopperConfig, params, "chopper")


def run_chopper_run(rc):
    cfg = _chopper_cfg(rc)
    bridge = _build(AccelHalfBridge, rc.section("bridge"), "bridge")
    sec = rc.section("chopper_run")
    noise = _noise(sec["noise"], "chopper_run", rc.seed)
    res = chopper.run_chain(cfg, bridge, sec["accel_g"], noise, rc.seed)
    step = max(1, int(sec["decimate"]))
    t = res.v_y.times()[::step]
    waves = zip(t, res.v_y.samples[::step], res.v_z.samples[::step], res.v_out.samples[::step])
    lines = [
        f"chopper-run: accel {sec['accel_g']:g} g",
        f"modulated amplitude: {res.modulated_amplitude * 1e3:.4f} mV",
        f"dc_out: {res.dc_out * 1e3:.4f} mV (expected {res.expected_dc * 1e3:.4f} mV)",
    ]
    files = {
        "chopper_run.csv": (("accel_g", "modulated_amplitude_v", "dc_out_v", "expected_dc_v"),
                            [(sec["accel_g"], res.modulated_amplitude, res.dc_out, res.expected_dc)]),
        "waveforms.csv": (("time_s", "v_y_v", "v_z_v", "v_out_v"), list(waves)),
    }
    return lines, files


def run_chopper_suppression(rc):
    bridge = _build(AccelHalfBridge, rc.section("bridge"), "bridge")
    sec = rc.section("suppression")
    noise = _noise(sec["noise"], "suppression", rc.seed)
    table, lines = [], ["chopper-suppression:"]
    for f_c in sec["carrier_frequencies"]:
        cfg = _chopper_cfg(rc, duration=sec["duration"], f_carrier=f_c)
        try:
            det = chopper.suppression_details(cfg, bridge, sec["accel_g"], noise, rc.seed)
        except ValueError as exc:
            raise ConfigError(f"invalid config section 'suppression': {exc}") from None
        table.append((f_c, noise.white_density, noise.flicker_a1hz,
                      det.error_rms_baseline, det.error_rms_chopped, det.db))
        lines.append(f"f_carrier {f_c:g} Hz: suppression {det.db:.2f} dB")
    header = ("f_carrier_hz", "white_density_v_rthz", "flicker_a1hz_v_rthz",
              "error_rms_baseline_v", "error_rms_chopped_v", "suppression_db")
    return lines, {"suppression.csv": (header, table)}


def run_montecarlo(rc):
    cfg = _chopper_cfg(rc)
    bridge = _build(AccelHalfBridge, rc.section("bridge"), "bridge")
    sec = rc.section("montecarlo")
    spec = _build(harness.MonteCarloSpec, dict(
        n_samples=sec["n_samples"],
        rel_spread_sensitivity=sec["rel_spread_sensitivity"],
        rel_spread_c_rest=sec["rel_spread_c_rest"],
        noise=_noise(sec["noise"], "montecarlo", rc.seed),
        master_seed=rc.seed,
    ), "montecarlo")
    samples = harness.montecarlo_samples(cfg, bridge, sec["accel_g"], spec, sec["workers"])
    st = harness.stats([s.dc_out for s in samples])
    table = [(s.index, s.sensitivity, s.c_rest, s.dc_out) for s in samples]
    lines = [f"montecarlo: {spec.n_samples} devices at {sec['accel_g']:g} g",
             f"dc_out: {st.report()}"]
    return lines, {"montecarlo.csv": (("sample_index", "sensitivity_f_per_g", "c_rest_f", "dc_out_v"),
                                      table)}


def run_compare(rc):
    cfc_cfg = _build(cfc.CfcConfig, rc.section("cfc"), "cfc")
    ch_cfg = _chopper_cfg(rc)
    bridge = _build(AccelHalfBridge, rc.section("bridge"), "bridge")
    sec, sw = rc.section("compare"), rc.section("sweep")
    report = harness.compare_interfaces(
        cfc_cfg, ch_cfg, bridge, _noise(sec["noise"], "compare", rc.seed),
        c_min=sw["c_min"], c_max=sw["c_max"], n_points=sw["n_points"],
        accel=sec["accel_g"], seed=rc.seed, n_noise_runs=sec["n_noise_runs"])
    table = [(r.name, r.capacitance_range[0], r.capacitance_range[1], r.smallest_resolvable,
              r.linearity_r2, r.stage_count, r.noise_robustness_db) for r in report.rows]
    header = ("interface", "range_min_f", "range_max_f", "smallest_resolvable_f",
              "linearity_r2", "stage_count", "noise_robustness_db")
    return ["compare:", report.render()], {"comparison.csv": (header, table)}


def run_psd(rc):
    cfg = _chopper_cfg(rc)
    bridge = _build(AccelHalfBridge, rc.section("bridge"), "bridge")
    sec = rc.section("psd")
    if sec["source"] not in PSD_SOURCES:
        raise ConfigError(f"config field 'psd.source' must be one of {PSD_SOURCES}, "
                          f"got {sec['source']!r}")
    noise = _noise(sec["noise"], "psd", rc.seed)
    if sec["source"] == "noise":
        wave = amplifier_noise(cfg.sample_rate, cfg.n_samples, noise)
    else:
        res = chopper.run_chain(cfg, bridge, sec["accel_g"], noise, rc.seed)
        wave = getattr(res, sec["source"])
    try:
        spec = estimate_psd(wave, sec["segment_len"], sec["overlap_fraction"])
    except ValueError as exc:
        raise ConfigError(f"invalid config section 'psd': {exc}") from None
    lines = [f"psd of {sec['source']}: {len(spec.frequencies)} bins, "
             f"resolution {spec.bin_width:.4g} Hz",
             f"peak bin: {spec.peak_frequency():.6g} Hz",
             f"total power: {spec.total_power():.6e} V^2"]
    return lines, {"psd.csv": (("frequency_hz", "psd_v2_per_hz"),
                               list(zip(spec.frequencies, spec.psd)))}


RUNNERS = {
    "cfc-sweep": run_cfc_sweep,
    "cfc-transient": run_cfc_transient,
    "chopper-run": run_chopper_run,
    "chopper-suppression": run_chopper_suppression,
    "montecarlo": run_montecarlo,
    "compare": run_compare,
    "psd": run_psd,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="capreadout",
        description="Capacitive sensor read-out simulator: oscillator and chopper interfaces.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="YAML file overriding the defaults")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration as YAML and exit")
        if name in ("chopper-run", "chopper-suppression", "montecarlo", "compare", "psd"):
            p.add_argument("--accel-g", type=float, help="constant acceleration in g")
    return parser


_ACCEL_SECTION = {"chopper-run": "chopper_run", "chopper-suppression": "suppression",
                  "montecarlo": "montecarlo", "compare": "compare", "psd": "psd"}


def run_command(argv=None):
    args = build_parser().parse_args(argv)
    try:
        rc = load_run_config(args.command, args.config, args.seed, args.out)
        if getattr(args, "accel_g", None) is not None:
            rc.sections[_ACCEL_SECTION[args.command]]["accel_g"] = args.accel_g
        if args.print_config:
            keep = {"seed": rc.seed}
            keep.update({s: rc.sections[s] for s in SECTIONS[args.command]})
            sys.stdout.write(yaml.safe_dump(keep, sort_keys=False))
            return 0
        lines, files = RUNNERS[args.command](rc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1

    rc.out_dir.mkdir(parents=True, exist_ok=True)
    for filename, (header, rows) in files.items():
        write_csv(rc.out_dir / filename, header, rows)
    summary = "\n".join(lines + [f"seed: {rc.seed}"]) + "\n"
    (rc.out_dir / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return 0


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
