"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 fit non-convergence.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as tio
from .circlefit import fit_resonance, sweep_grid
from .config import RunConfig
from .errors import FitError, NegativeLossTangentWarning, ValidationError
from .model import Environment, decay_rate, loaded_q_from_internal, photon_number_from_q, tls_inverse_q
from .series import QiTimeSeries, SweepMetadata
from .spectral import fit_one_over_f, lowest_decade_mean, series_coherence, series_psd
from .stats import averaging_time_scan, fit_lognormal, skewness_z, windowed_convergence
from .synth import simulate_interleaved_run, simulate_timetrace, synth_sweep
from .tls import PowerSweepData, fit_power_dependence, fit_sigma_vs_q, loss_tangent_series

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


class Context:
    """Resolved config plus common flags for one invocation."""

    def __init__(self, args):
        self.config = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            self.config.seed = int(args.seed)
        if args.output_dir is not None:
            self.config.output_dir = args.output_dir
        self.config.validate()
        self.threads = max(1, int(args.threads or 1))
        self.out = Path(self.config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = self.config.hash()

    def path(self, name):
        return self.out / name

    def json(self, name, obj):
        p = tio.write_json(self.path(name), obj, self.hash)
        print(p)
        return p

    def save_config(self):
        tio.write_json(self.path("config.json"), self.config.to_dict(), self.hash)


# --------------------------------------------------------------------------
# simulate


def cmd_simulate_sweep(ctx, args):
    c = ctx.config
    p = c.resonator.build()
    if args.q_i is not None:
        p = p.replace(loaded_q=float(loaded_q_from_internal(args.q_i, p.coupling_q_mag, p.phi)))
    noise = args.noise_sd if args.noise_sd is not None else c.measurement.sweep_noise_sd["LP"]
    grid = sweep_grid(p.f_r, p.loaded_q, c.measurement.span_linewidths, c.measurement.n_points)
    meta = SweepMetadata(args.power_dbm, c.measurement.temperature_k, 0.0)
    sweep = synth_sweep(p, grid, noise, c.seed, meta)
    print(tio.write_sweep(ctx.path(args.name), sweep, ctx.hash))
    ctx.save_config()
    return EXIT_OK


def _write_truth(ctx, name, truths: dict):
    labels, cols = [], [[] for _ in range(6)]
    for label, tr in truths.items():
        labels += [label] * tr.timestamps.size
        for j, v in enumerate((tr.timestamps, tr.f_delta_tls, tr.q_i, tr.mean_photons, tr.inv_q_pi, tr.f_r)):
            cols[j].append(v)
    header = ("label", "timestamp_s", "f_delta_tls", "q_i", "mean_photons", "inv_q_pi", "f_r_hz")
    p = tio.write_table(ctx.path(name), header, [np.array(labels)] + [np.concatenate(c) for c in cols], ctx.hash)
    print(p)


def cmd_simulate_timetrace(ctx, args):
    c = ctx.config
    meas = c.measurement.build(ctx.threads)
    dt = args.dt or c.analysis.timetrace_dt_s
    dur = args.duration or c.analysis.timetrace_duration_s
    power = args.power_dbm if args.power_dbm is not None else c.schedule.power_points_dbm[0]
    trace = simulate_timetrace(
        c.tls.build(), c.resonator.build(), c.fluctuation.build(c.seed), power, dt, dur, meas,
        args.label, keep_sweeps=args.save_sweeps,
    )
    print(tio.write_series(ctx.path(f"qi_{args.label}.csv"), trace.series, ctx.hash))
    _write_truth(ctx, f"truth_{args.label}.csv", {args.label: trace.truth})
    if args.save_sweeps:
        if trace.sweeps is None:
            raise ValidationError("--save-sweeps requires measurement.mode = 'full'")
        d = ctx.path("sweeps")
        for k, s in enumerate(trace.sweeps):
            tio.write_sweep(d / f"sweep_{k:05d}.csv", s, ctx.hash)
        print(d)
    ctx.save_config()
    return EXIT_OK


def cmd_simulate_interleaved(ctx, args):
    c = ctx.config
    run = simulate_interleaved_run(
        c.tls.build(), c.resonator.build(), c.fluctuation.build(c.seed), c.schedule.build(),
        c.measurement.build(ctx.threads),
    )
    for label, s in run.series.items():
        print(tio.write_series(ctx.path(f"qi_{label}.csv"), s, ctx.hash))
    _write_truth(ctx, "truth.csv", run.truth)
    ctx.save_config()
    return EXIT_OK


def cmd_simulate_power_curve(ctx, args):
    """Q_i versus photon number from the configured TLS model with noise."""
    c = ctx.config
    m, p = c.tls.build(), c.resonator.build()
    powers = np.asarray(c.analysis.power_curve_dbm, dtype=float)
    env0 = Environment(p.omega_r, c.measurement.temperature_k, 0.0)
    q_i = np.full(powers.size, p.q_i)
    for _ in range(60):
        q = loaded_q_from_internal(q_i, p.coupling_q_mag, p.phi)
        n = photon_number_from_q(powers, c.measurement.attenuation_db, q, p.coupling_q_mag, p.f_r)
        q_i = 1.0 / tls_inverse_q(m, Environment(env0.omega_r, env0.temperature, n))
    rel = args.relative_noise
    rng = np.random.default_rng(c.seed)
    q_meas = q_i * (1 + rel * rng.standard_normal(q_i.size))
    data = PowerSweepData(n, q_meas, rel * q_i, c.measurement.temperature_k, p.f_r)
    print(tio.write_power_curve(ctx.path("power_curve.csv"), data, ctx.hash))
    ctx.save_config()
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def cmd_fit_sweep(ctx, args):
    sweep = tio.read_sweep(args.input)
    fit = fit_resonance(sweep)
    ctx.json(args.name, fit.to_dict())
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit_power_curve(ctx, args):
    data = tio.read_power_curve(args.input)
    fit = fit_power_dependence(data)
    ctx.json(args.name, fit.to_dict())
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def _column_series(s: QiTimeSeries, column):
    if column == "decay_rate":
        if s.f_r is None:
            raise ValidationError("decay rate needs an f_r column")
        return QiTimeSeries(s.timestamps, decay_rate(s.f_r, s.q_i), s.q_i_sigma), "q_i"
    return s, column


def cmd_analyze_spectrum(ctx, args):
    a = ctx.config.analysis
    s, col = _column_series(tio.read_series(args.input), args.column)
    spec = series_psd(s, col, a.segment_length, a.overlap_fraction, a.welch_window)
    tio.write_spectrum(ctx.path(args.name), spec, ctx.hash)
    print(ctx.path(args.name))
    amp, alpha = fit_one_over_f(spec)
    ctx.json(Path(args.name).stem + "_fit.json", {"amplitude": amp, "alpha": alpha, "column": args.column})
    return EXIT_OK


def cmd_analyze_coherence(ctx, args):
    a = ctx.config.analysis
    sa, ca = _column_series(tio.read_series(args.input), args.column)
    sb, cb = _column_series(tio.read_series(args.input_b), args.column_b or args.column)
    spec = series_coherence(sa, sb, ca, cb, a.segment_length, a.overlap_fraction, a.welch_window)
    tio.write_spectrum(ctx.path(args.name), spec, ctx.hash)
    print(ctx.path(args.name))
    ctx.json(Path(args.name).stem + "_summary.json", {"lowest_decade_mean": lowest_decade_mean(spec)})
    return EXIT_OK


def cmd_analyze_loss_tangent(ctx, args):
    lp, hp = tio.read_series(args.lp), tio.read_series(args.hp)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NegativeLossTangentWarning)
        series = loss_tangent_series(lp, hp)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(tio.write_loss_tangent(ctx.path(args.name), series, ctx.hash))
    return EXIT_OK


def cmd_analyze_distribution(ctx, args):
    series = tio.read_loss_tangent(args.input)
    pos = series.positive()
    fit = fit_lognormal(pos.f_delta_tls)
    out = fit.to_dict()
    out["n_excluded"] = series.n_flagged
    out["skewness_z"] = skewness_z(pos.f_delta_tls) if len(pos) >= 8 else None
    ctx.json(args.name, out)
    return EXIT_OK


def cmd_analyze_convergence(ctx, args):
    a = ctx.config.analysis
    series = tio.read_loss_tangent(args.input)
    ref = a.reference_span_s or series.span
    windows = [w for w in a.window_sizes_s if w <= ref] or [ref]
    curve = windowed_convergence(series, windows, ref)
    header = ("window_s", "delta_mu", "delta_sigma", "delta_mu_signed", "delta_sigma_signed", "n_windows")
    cols = [curve.window_sizes, curve.delta_mu, curve.delta_sigma, curve.delta_mu_signed,
            curve.delta_sigma_signed, curve.n_windows]
    print(tio.write_table(ctx.path(args.name), header, cols, ctx.hash))
    return EXIT_OK


def cmd_analyze_averaging(ctx, args):
    d = Path(args.sweeps_dir)
    files = sorted(p for p in d.glob("*.csv"))
    if not files:
        raise ValidationError(f"no sweep files in {d}")
    sweeps = [tio.read_sweep(p) for p in files]
    k = args.k or ctx.config.analysis.k_values
    scan = averaging_time_scan(sweeps, args.q_hp, k, ctx.threads)
    header = ("k", "delta_t_s", "z_score", "skewness", "n_used", "n_failed")
    cols = [scan.k_values, scan.delta_t, scan.z, scan.skewness, scan.n_used, scan.n_failed]
    print(tio.write_table(ctx.path(args.name), header, cols, ctx.hash))
    return EXIT_OK


def cmd_analyze_sigma_q(ctx, args):
    pts = []
    for path in args.inputs:
        s = tio.read_series(path)
        pts.append((s.q_i.mean(), s.q_i.std(ddof=1)))
    slope = fit_sigma_vs_q(pts)
    ctx.json(args.name, {"slope": slope, "points": pts, "inputs": [str(p) for p in args.inputs]})
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def cmd_report(ctx, args):
    """Interleaved run followed by the standard analyses."""
    c = ctx.config
    a = c.analysis
    run = simulate_interleaved_run(
        c.tls.build(), c.resonator.build(), c.fluctuation.build(c.seed), c.schedule.build(),
        c.measurement.build(ctx.threads),
    )
    for label, s in run.series.items():
        tio.write_series(ctx.path(f"qi_{label}.csv"), s, ctx.hash)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeLossTangentWarning)
        fd = loss_tangent_series(run.lp, run.hp)
    tio.write_loss_tangent(ctx.path("fdtls.csv"), fd, ctx.hash)
    logn = fit_lognormal(fd.positive().f_delta_tls)
    spectra = {}
    for label, s in run.series.items():
        spec = series_psd(s, "q_i", a.segment_length, a.overlap_fraction, a.welch_window)
        tio.write_spectrum(ctx.path(f"psd_{label}.csv"), spec, ctx.hash)
        amp, alpha = fit_one_over_f(spec)
        spectra[label] = {"amplitude": amp, "alpha": alpha}
    coh = {}
    for x, y in (("LP", "MP"), ("LP", "HP"), ("MP", "HP")):
        spec = series_coherence(run.series[x], run.series[y], "q_i", "q_i",
                                a.segment_length, a.overlap_fraction, a.welch_window)
        tio.write_spectrum(ctx.path(f"coherence_{x}_{y}.csv"), spec, ctx.hash)
        coh[f"{x}-{y}"] = lowest_decade_mean(spec)
    report = {
        "n_points": {k: len(s) for k, s in run.series.items()},
        "n_failed": {k: s.n_failed for k, s in run.series.items()},
        "relative_sd_q_i": {k: float(s.q_i.std() / s.q_i.mean()) for k, s in run.series.items()},
        "loss_tangent": {**logn.to_dict(), "n_negative": fd.n_flagged},
        "spectra": spectra,
        "coherence_lowest_decade": coh,
    }
    ctx.json("report.json", report)
    ctx.save_config()
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--output-dir", help="directory for outputs")
    p.add_argument("--threads", type=int, default=1, help="worker processes for batch fits")


def build_parser():
    parser = argparse.ArgumentParser(prog="tlsfluct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    top = parser.add_subparsers(dest="group", required=True)

    sim = top.add_parser("simulate").add_subparsers(dest="what", required=True)
    p = sim.add_parser("sweep")
    p.add_argument("--q-i", type=float)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--power-dbm", type=float, default=float("nan"))
    p.add_argument("--name", default="sweep.csv")
    p.set_defaults(func=cmd_simulate_sweep)
    p = sim.add_parser("timetrace")
    p.add_argument("--power-dbm", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--label", default="LP", choices=["LP", "MP", "HP"])
    p.add_argument("--save-sweeps", action="store_true")
    p.set_defaults(func=cmd_simulate_timetrace)
    p = sim.add_parser("interleaved")
    p.set_defaults(func=cmd_simulate_interleaved)
    p = sim.add_parser("power-curve")
    p.add_argument("--relative-noise", type=float, default=0.01)
    p.set_defaults(func=cmd_simulate_power_curve)
    for sp in sim.choices.values():
        _common(sp)

    fit = top.add_parser("fit").add_subparsers(dest="what", required=True)
    p = fit.add_parser("sweep")
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="fit.json")
    p.set_defaults(func=cmd_fit_sweep)
    p = fit.add_parser("power-curve")
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="tls_fit.json")
    p.set_defaults(func=cmd_fit_power_curve)
    for sp in fit.choices.values():
        _common(sp)

    an = top.add_parser("analyze").add_subparsers(dest="what", required=True)
    columns = ["q_i", "f_r", "qc_mag", "decay_rate"]
    p = an.add_parser("spectrum")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="q_i", choices=columns)
    p.add_argument("--name", default="spectrum.csv")
    p.set_defaults(func=cmd_analyze_spectrum)
    p = an.add_parser("coherence")
    p.add_argument("--input", required=True)
    p.add_argument("--input-b", required=True)
    p.add_argument("--column", default="q_i", choices=columns)
    p.add_argument("--column-b", choices=columns)
    p.add_argument("--name", default="coherence.csv")
    p.set_defaults(func=cmd_analyze_coherence)
    p = an.add_parser("loss-tangent")
    p.add_argument("--lp", required=True)
    p.add_argument("--hp", required=True)
    p.add_argument("--name", default="fdtls.csv")
    p.set_defaults(func=cmd_analyze_loss_tangent)
    p = an.add_parser("distribution")
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="lognormal.json")
    p.set_defaults(func=cmd_analyze_distribution)
    p = an.add_parser("convergence")
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="convergence.csv")
    p.set_defaults(func=cmd_analyze_convergence)
    p = an.add_parser("averaging")
    p.add_argument("--sweeps-dir", required=True)
    p.add_argument("--q-hp", type=float, required=True)
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--name", default="averaging.csv")
    p.set_defaults(func=cmd_analyze_averaging)
    p = an.add_parser("sigma-q")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--name", default="sigma_q.json")
    p.set_defaults(func=cmd_analyze_sigma_q)
    for sp in an.choices.values():
        _common(sp)

    p = top.add_parser("report")
    _common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are invalid input, not non-convergence
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        ctx = Context(args)
        return args.func(ctx, args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValidationError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
