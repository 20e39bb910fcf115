"""Seeded stochastic simulation of resonator sweeps and Q_i time series.

The loss tangent is modeled as ``exp(m + s g(t))`` with ``g`` a standardized
Gaussian process whose spectrum falls as 1/f^alpha. Q_i at each measurement
follows from the saturable TLS model, and is either measured through a full
synthetic sweep and fit ("full" mode) or perturbed at the fit-uncertainty
scale directly ("fast" mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circlefit import fit_many, sweep_grid
from .errors import ValidationError
from .model import (
    DEFAULT_ATTENUATION_DB,
    ResonatorParams,
    TLSModel,
    eval_s21,
    loaded_q_from_internal,
    photon_number_from_q,
    saturation_factor,
    thermal_factor,
)
from .series import FrequencySweep, QiTimeSeries, SweepMetadata

POWER_LABELS = ("LP", "MP", "HP")


def _rng(seed):
    return np.random.default_rng(seed)


def _child_seeds(seed, n):
    """Independent integer seeds derived from one parent seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n)]


# --------------------------------------------------------------------------
# Gaussian and log-normal processes


def gen_one_over_f_gaussian(n, dt, alpha=1.0, variance=1.0, seed=None):
    """Zero-mean Gaussian sequence with a 1/f^alpha power spectrum.

    White noise is shaped in the Fourier domain by ``f^(-alpha/2)`` with the
    zero-frequency bin removed, transformed back and standardized so that
    the sample variance equals ``variance`` exactly.
    """
    n = int(n)
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    if variance < 0:
        raise ValidationError("variance must be >= 0")
    white = _rng(seed).standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, dt)
    gain = np.zeros_like(f)
    gain[1:] = f[1:] ** (-alpha / 2.0)
    x = np.fft.irfft(spec * gain, n)
    x -= x.mean()
    sd = x.std()
    if sd == 0:
        return np.zeros(n)
    return x / sd * np.sqrt(variance)


@dataclass(frozen=True)
class FluctuationSpec:
    """Statistics of the fluctuating loss tangent and auxiliary noise."""

    target_mean: float = 9.0e-7
    target_sd: float = 2.2e-7
    spectral_exponent: float = 1.0
    hp_relative_sd: float = 0.005
    freq_relative_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.target_mean > 0:
            raise ValidationError("target_mean must be > 0")
        if self.target_sd < 0:
            raise ValidationError("target_sd must be >= 0")
        if self.spectral_exponent < 0:
            raise ValidationError("spectral_exponent must be >= 0")
        for name in ("hp_relative_sd", "freq_relative_sd"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValidationError(f"{name} must lie in [0, 1), got {v}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def log_params(self):
        """(m, s) of the log-normal with the target mean and sd."""
        mu, sigma = self.target_mean, self.target_sd
        m = np.log(mu**2 / np.sqrt(mu**2 + sigma**2))
        s = np.sqrt(np.log1p(sigma**2 / mu**2))
        return float(m), float(s)


def _lognormal_from_gaussian(spec: FluctuationSpec, g):
    m, s = spec.log_params
    if s == 0:
        return np.full(np.shape(g), spec.target_mean)
    return np.exp(m + s * g)


def gen_loss_tangent_process(spec: FluctuationSpec, n, dt, seed=None):
    """Strictly positive log-normal series with a 1/f^alpha Gaussian core."""
    seed = spec.seed if seed is None else seed
    g = gen_one_over_f_gaussian(n, dt, spec.spectral_exponent, 1.0, seed)
    return _lognormal_from_gaussian(spec, g)


# --------------------------------------------------------------------------
# sweeps


def synth_sweep(p: ResonatorParams, grid, noise_sd=0.0, seed=None, metadata: SweepMetadata | None = None):
    """Model transmission on ``grid`` plus complex white noise.

    ``noise_sd`` is the standard deviation per quadrature.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValidationError("grid must be one-dimensional with at least 3 points")
    bad = np.flatnonzero(np.diff(grid) <= 0)
    if bad.size:
        raise ValidationError(f"grid not strictly increasing at index {bad[0] + 1}")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be >= 0")
    s21 = eval_s21(grid, p)
    if noise_sd > 0:
        noise = _rng(seed).standard_normal((2, grid.size))
        s21 = s21 + noise_sd * (noise[0] + 1j * noise[1])
    return FrequencySweep(grid, s21, metadata or SweepMetadata())


# --------------------------------------------------------------------------
# schedule and measurement model


@dataclass(frozen=True)
class InterleavedSchedule:
    """Cyclic LP/MP/HP acquisition with idle times.

    One cycle is ``idle_tau1, LP, MP, idle_tau2, HP``.
    """

    idle_tau1: float = 3.0
    idle_tau2: float = 0.5
    point_durations: tuple = (38.0, 9.0, 10.0)
    total_duration: float = 16 * 3600.0
    power_points: tuple = (-75.0, -55.0, -15.0)

    def __post_init__(self):
        object.__setattr__(self, "point_durations", tuple(float(d) for d in self.point_durations))
        object.__setattr__(self, "power_points", tuple(float(d) for d in self.power_points))
        if len(self.point_durations) != 3 or len(self.power_points) != 3:
            raise ValidationError("schedule needs exactly three points (LP, MP, HP)")
        if not (self.idle_tau1 > 0 and self.idle_tau2 > 0 and min(self.point_durations) > 0):
            raise ValidationError("all durations must be > 0")
        if self.total_duration < self.cycle_length:
            raise ValidationError("total_duration is shorter than one cycle")

    @property
    def cycle_length(self) -> float:
        return self.idle_tau1 + self.idle_tau2 + sum(self.point_durations)

    @property
    def n_cycles(self) -> int:
        return int(self.total_duration // self.cycle_length)

    def offsets(self):
        """Mid-point time of each power's measurement within a cycle."""
        lp, mp, hp = self.point_durations
        t_lp = self.idle_tau1 + lp / 2
        t_mp = self.idle_tau1 + lp + mp / 2
        t_hp = self.idle_tau1 + lp + mp + self.idle_tau2 + hp / 2
        return (t_lp, t_mp, t_hp)

    def timestamps(self):
        """Dict label -> measurement timestamps for the whole run."""
        start = np.arange(self.n_cycles) * self.cycle_length
        return {lab: start + off for lab, off in zip(POWER_LABELS, self.offsets())}


@dataclass(frozen=True)
class MeasurementModel:
    """How latent Q_i values become measured ones.

    ``fit_relative_sd`` is used in fast mode and ``sweep_noise_sd`` in full
    mode; both map a power label to a value.
    """

    mode: str = "fast"
    fit_relative_sd: dict = field(default_factory=lambda: {"LP": 0.02, "MP": 0.005, "HP": 0.001})
    sweep_noise_sd: dict = field(default_factory=lambda: {"LP": 0.03, "MP": 0.005, "HP": 0.001})
    span_linewidths: float = 10.0
    n_points: int = 201
    temperature: float = 0.01
    attenuation_db: float = DEFAULT_ATTENUATION_DB
    threads: int = 1

    def __post_init__(self):
        if self.mode not in ("fast", "full"):
            raise ValidationError(f"mode must be 'fast' or 'full', got {self.mode!r}")
        if self.n_points < 3 or self.span_linewidths <= 0:
            raise ValidationError("sweep grid needs >= 3 points and a positive span")
        if self.temperature < 0 or self.attenuation_db < 0:
            raise ValidationError("temperature and attenuation must be >= 0")
        for d in (self.fit_relative_sd, self.sweep_noise_sd):
            if any(v < 0 for v in d.values()):
                raise ValidationError("noise levels must be >= 0")

    def level(self, table, label):
        if label in table:
            return float(table[label])
        raise ValidationError(f"no noise level configured for {label!r}")


# --------------------------------------------------------------------------
# forward model for one power


@dataclass(frozen=True)
class LatentTruth:
    """Hidden values behind one measured series."""

    timestamps: np.ndarray
    f_delta_tls: np.ndarray
    q_i: np.ndarray
    mean_photons: np.ndarray
    inv_q_pi: np.ndarray
    f_r: np.ndarray


def _steady_state(m: TLSModel, p: ResonatorParams, power_dbm, f_delta, inv_q_pi, measurement, n_iter=60):
    """Q_i and <n> consistent with each other at one drive power.

    <n> depends on the loaded Q, which depends on Q_i, which depends on <n>;
    a fixed-point iteration converges quickly because the saturation factor
    is a contraction here.
    """
    therm = thermal_factor(p.omega_r, measurement.temperature)
    n = np.zeros_like(f_delta)
    for _ in range(n_iter):
        inv_qi = f_delta * therm * saturation_factor(n, m.n_c, m.beta) + inv_q_pi
        q = loaded_q_from_internal(1.0 / inv_qi, p.coupling_q_mag, p.phi)
        n_new = photon_number_from_q(power_dbm, measurement.attenuation_db, q, p.coupling_q_mag, p.f_r)
        if np.allclose(n_new, n, rtol=1e-13, atol=0):
            n = n_new
            break
        n = n_new
    inv_qi = f_delta * therm * saturation_factor(n, m.n_c, m.beta) + inv_q_pi
    return 1.0 / inv_qi, np.asarray(n, dtype=float)


def _measure(label, timestamps, q_true, f_r, p, power_dbm, measurement, seed):
    """Turn latent Q_i into a measured QiTimeSeries."""
    n = q_true.size
    if measurement.mode == "fast":
        rel = measurement.level(measurement.fit_relative_sd, label)
        eps = _rng(seed).standard_normal(n)
        q_meas = q_true * (1.0 + rel * eps)
        return QiTimeSeries(
            timestamps, q_meas, rel * q_true, power_dbm, measurement.temperature, label,
            f_r=f_r, f_r_sigma=np.zeros(n),
            qc_mag=np.full(n, p.coupling_q_mag), qc_sigma=np.zeros(n),
        ), None

    noise = measurement.level(measurement.sweep_noise_sd, label)
    seeds = _child_seeds(seed, n)
    # one fixed grid per trace, like an analyzer left at one setting
    q_typ = float(np.median(loaded_q_from_internal(q_true, p.coupling_q_mag, p.phi)))
    grid = sweep_grid(p.f_r, q_typ, measurement.span_linewidths, measurement.n_points)
    sweeps = []
    for k in range(n):
        pk = ResonatorParams.from_internal(
            q_true[k], p.coupling_q_mag, p.phi, f_r=f_r[k], amplitude=p.amplitude, delay=p.delay
        )
        meta = SweepMetadata(power_dbm, measurement.temperature, float(timestamps[k]))
        sweeps.append(synth_sweep(pk, grid, noise, seeds[k], meta))
    return _series_from_fits(sweeps, fit_many(sweeps, measurement.threads), label, power_dbm,
                             measurement.temperature), sweeps


def _series_from_fits(sweeps, fits, label, power_dbm, temperature):
    ok = [i for i, r in enumerate(fits) if r.converged]
    t = np.array([sweeps[i].metadata.timestamp_s for i in ok])
    return QiTimeSeries(
        t,
        np.array([fits[i].q_i for i in ok]),
        np.array([fits[i].sigma68["q_i"] for i in ok]),
        power_dbm,
        temperature,
        label,
        f_r=np.array([fits[i].params.f_r for i in ok]),
        f_r_sigma=np.array([fits[i].sigma68["f_r"] for i in ok]),
        qc_mag=np.array([fits[i].params.coupling_q_mag for i in ok]),
        qc_sigma=np.array([fits[i].sigma68["coupling_q_mag"] for i in ok]),
        n_failed=len(fits) - len(ok),
    )


def _frequency_track(p, spec, g_freq, sat):
    if spec.freq_relative_sd == 0:
        return np.full(np.shape(sat), p.f_r)
    return p.f_r * (1.0 + spec.freq_relative_sd * g_freq * sat)


# --------------------------------------------------------------------------
# runs


@dataclass
class InterleavedRun:
    """Measured LP/MP/HP series and the latent truth behind them."""

    lp: QiTimeSeries
    mp: QiTimeSeries
    hp: QiTimeSeries
    truth: dict
    sweeps: dict | None = None

    @property
    def series(self):
        return {"LP": self.lp, "MP": self.mp, "HP": self.hp}


def simulate_interleaved_run(
    m: TLSModel,
    p: ResonatorParams,
    spec: FluctuationSpec,
    sched: InterleavedSchedule | None = None,
    measurement: MeasurementModel | None = None,
    keep_sweeps=False,
) -> InterleavedRun:
    """Simulate a cyclic LP/MP/HP acquisition.

    The latent Gaussian layer is generated once per cycle on a uniform grid
    aligned with the LP timestamps and linearly interpolated to the MP and
    HP times; 1/Q_PI receives an independent relative perturbation at every
    point.
    """
    sched = sched or InterleavedSchedule()
    measurement = measurement or MeasurementModel()
    n_cyc = sched.n_cycles
    if n_cyc < 2:
        raise ValidationError("schedule must contain at least two full cycles")
    times = sched.timestamps()
    seeds = _child_seeds(spec.seed, 8)

    dt = sched.cycle_length
    g = gen_one_over_f_gaussian(n_cyc, dt, spec.spectral_exponent, 1.0, seeds[0])
    g_f = gen_one_over_f_gaussian(n_cyc, dt, spec.spectral_exponent, 1.0, seeds[1])
    grid_t = times["LP"]
    hp_eps = _rng(seeds[2]).standard_normal((3, n_cyc))

    out, truth, raw = {}, {}, {}
    for j, (label, power) in enumerate(zip(POWER_LABELS, sched.power_points)):
        t = times[label]
        gj = np.interp(t, grid_t, g)
        fd = _lognormal_from_gaussian(spec, gj)
        inv_q_pi = (1.0 / m.q_pi) * (1.0 + spec.hp_relative_sd * hp_eps[j])
        q_true, n_ph = _steady_state(m, p, power, fd, inv_q_pi, measurement)
        sat = saturation_factor(n_ph, m.n_c, m.beta)
        f_r = _frequency_track(p, spec, np.interp(t, grid_t, g_f), sat)
        series, sweeps = _measure(label, t, q_true, f_r, p, power, measurement, seeds[3 + j])
        out[label] = series
        raw[label] = sweeps
        truth[label] = LatentTruth(t, fd, q_true, n_ph, inv_q_pi, f_r)
    return InterleavedRun(out["LP"], out["MP"], out["HP"], truth, raw if keep_sweeps else None)


@dataclass
class TimeTrace:
    series: QiTimeSeries
    truth: LatentTruth
    sweeps: list | None = None


def simulate_timetrace(
    m: TLSModel,
    p: ResonatorParams,
    spec: FluctuationSpec,
    power_dbm: float,
    dt: float,
    total_duration: float,
    measurement: MeasurementModel | None = None,
    label: str = "LP",
    keep_sweeps=False,
) -> TimeTrace:
    """Single-power Q_i time trace sampled every ``dt`` seconds.

    ``label`` selects the noise levels of ``measurement``.
    """
    measurement = measurement or MeasurementModel()
    if not dt > 0:
        raise ValidationError("dt must be positive")
    n = int(total_duration // dt)
    if n < 2:
        raise ValidationError("total_duration must cover at least two samples")
    seeds = _child_seeds(spec.seed, 5)
    t = (np.arange(n) + 0.5) * dt
    fd = gen_loss_tangent_process(spec, n, dt, seeds[0])
    inv_q_pi = (1.0 / m.q_pi) * (1.0 + spec.hp_relative_sd * _rng(seeds[1]).standard_normal(n))
    q_true, n_ph = _steady_state(m, p, power_dbm, fd, inv_q_pi, measurement)
    sat = saturation_factor(n_ph, m.n_c, m.beta)
    g_f = gen_one_over_f_gaussian(n, dt, spec.spectral_exponent, 1.0, seeds[2])
    f_r = _frequency_track(p, spec, g_f, sat)
    series, sweeps = _measure(label, t, q_true, f_r, p, power_dbm, measurement, seeds[3])
    return TimeTrace(series, LatentTruth(t, fd, q_true, n_ph, inv_q_pi, f_r), sweeps if keep_sweeps else None)


def simulate_sweep_series(p: ResonatorParams, q_i, timestamps, noise_sd, seed=None,
                          span_linewidths=10.0, n_points=201, power_dbm=float("nan")):
    """Noisy sweeps on one shared grid for a given Q_i trajectory.

    The grid is centred on ``p.f_r`` with a span set by ``p.loaded_q``, so
    traces can be averaged point by point.
    """
    q_i = np.asarray(q_i, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    if q_i.shape != timestamps.shape:
        raise ValidationError("q_i and timestamps differ in length")
    grid = sweep_grid(p.f_r, p.loaded_q, span_linewidths, n_points)
    seeds = _child_seeds(seed, q_i.size)
    out = []
    for k in range(q_i.size):
        pk = ResonatorParams.from_internal(q_i[k], p.coupling_q_mag, p.phi, p.f_r, p.amplitude, p.delay)
        meta = SweepMetadata(power_dbm, 0.0, float(timestamps[k]))
        out.append(synth_sweep(pk, grid, noise_sd, seeds[k], meta))
    return out


def default_resonator(f_r=6e9, coupling_q_mag=5e5, phi=0.0):
    """A resonator near the LP operating point used in examples and tests."""
    return ResonatorParams.from_internal(5e5, coupling_q_mag, phi, f_r=f_r)


def default_tls_model():
    return TLSModel(f_delta0=9.0e-7, n_c=2.0, beta=0.5, q_pi=1.0e6)


__all__ = [
    "FluctuationSpec",
    "InterleavedRun",
    "InterleavedSchedule",
    "LatentTruth",
    "MeasurementModel",
    "TimeTrace",
    "default_resonator",
    "default_tls_model",
    "gen_loss_tangent_process",
    "gen_one_over_f_gaussian",
    "simulate_interleaved_run",
    "simulate_sweep_series",
    "simulate_timetrace",
    "synth_sweep",
]
