"""Log-normal fits, skewness tests, window-convergence and averaging scans."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .circlefit import average_traces, fit_many
from .errors import ValidationError
from .series import LossTangentSeries


@dataclass(frozen=True)
class LogNormalFit:
    mu_log: float
    sigma_log: float
    mean: float
    sd: float
    n: int

    @property
    def band1(self):
        return (float(np.exp(self.mu_log - self.sigma_log)), float(np.exp(self.mu_log + self.sigma_log)))

    @property
    def band2(self):
        return (float(np.exp(self.mu_log - 2 * self.sigma_log)), float(np.exp(self.mu_log + 2 * self.sigma_log)))

    def to_dict(self):
        return {
            "mu_log": self.mu_log,
            "sigma_log": self.sigma_log,
            "mean": self.mean,
            "sd": self.sd,
            "n": self.n,
            "band1": list(self.band1),
            "band2": list(self.band2),
        }


def fit_lognormal(x) -> LogNormalFit:
    """Maximum-likelihood log-normal fit (population sd of ln x)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 3:
        raise ValidationError(f"need at least 3 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    bad = np.flatnonzero(x <= 0)
    if bad.size:
        raise ValidationError(f"{bad.size} non-positive value(s), first at index {bad[0]}; exclude them first")
    logs = np.log(x)
    m = float(logs.mean())
    s = float(logs.std())
    mean = float(np.exp(m + s * s / 2))
    sd = float(mean * np.sqrt(np.expm1(s * s)))
    return LogNormalFit(m, s, mean, sd, int(x.size))


def skewness_z(x) -> float:
    """D'Agostino Z score of the sample skewness."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 8:
        raise ValidationError(f"skewness test needs n >= 8, got {x.size}")
    centred = x - x.mean()
    if not np.any(centred):
        return 0.0
    return float(sps.skewtest(x).statistic)


def sample_skewness(x) -> float:
    """Biased sample skewness g1."""
    return float(sps.skew(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ConvergenceCurve:
    window_sizes: np.ndarray
    delta_mu: np.ndarray
    delta_sigma: np.ndarray
    delta_mu_signed: np.ndarray
    delta_sigma_signed: np.ndarray
    n_windows: np.ndarray

    def crossing(self, which="mu", threshold=0.05):
        """Smallest window from which the curve stays at or below ``threshold``."""
        d = self.delta_mu if which == "mu" else self.delta_sigma
        above = np.flatnonzero(d > threshold)
        if above.size == 0:
            return float(self.window_sizes[0])
        if above[-1] == d.size - 1:
            return float("nan")
        return float(self.window_sizes[above[-1] + 1])


def windowed_convergence(series: LossTangentSeries, window_sizes, reference_span=None) -> ConvergenceCurve:
    """Relative deviations of windowed log-normal fits from a reference fit.

    The reference is the fit over the first ``reference_span`` seconds.
    Windows of each size slide through that span with a stride of half a
    window; per-window relative deviations of the mean and sd are averaged
    as absolute values (``delta_*``) and as signed values
    (``delta_*_signed``). Only valid (positive) samples are used.
    """
    s = series.positive()
    if len(s) < 3:
        raise ValidationError("too few valid samples")
    t = s.timestamps
    span = float(t[-1] - t[0])
    ref_span = span if reference_span is None else float(reference_span)
    if ref_span > span * (1 + 1e-12):
        raise ValidationError(f"reference_span {ref_span} exceeds the series span {span}")
    windows = np.asarray(window_sizes, dtype=float)
    if np.any(windows <= 0) or np.any(windows > ref_span * (1 + 1e-12)):
        raise ValidationError("window sizes must lie in (0, reference_span]")
    t0 = t[0]
    in_ref = t <= t0 + ref_span
    ref = fit_lognormal(s.f_delta_tls[in_ref])

    dmu, dsig, dmu_s, dsig_s, counts = [], [], [], [], []
    for w in windows:
        if w >= ref_span * (1 - 1e-12):
            starts = [t0]
            w = ref_span
        else:
            stride = w / 2.0
            starts = t0 + stride * np.arange(int(np.floor((ref_span - w) / stride + 1e-9)) + 1)
        rm, rs = [], []
        for a in starts:
            sel = (t >= a) & (t <= a + w)
            if sel.sum() < 3:
                continue
            fit = fit_lognormal(s.f_delta_tls[sel])
            rm.append((fit.mean - ref.mean) / ref.mean)
            rs.append((fit.sd - ref.sd) / ref.sd if ref.sd > 0 else 0.0)
        if not rm:
            raise ValidationError(f"window {w} s contains fewer than 3 samples")
        rm, rs = np.asarray(rm), np.asarray(rs)
        dmu.append(np.mean(np.abs(rm)))
        dsig.append(np.mean(np.abs(rs)))
        dmu_s.append(rm.mean())
        dsig_s.append(rs.mean())
        counts.append(rm.size)
    return ConvergenceCurve(windows, np.array(dmu), np.array(dsig), np.array(dmu_s), np.array(dsig_s),
                            np.array(counts))


@dataclass(frozen=True)
class AveragingScan:
    k_values: np.ndarray
    delta_t: np.ndarray
    z: np.ndarray
    skewness: np.ndarray
    n_used: np.ndarray
    n_failed: np.ndarray


def averaging_time_scan(sweeps, q_hp, k_values, threads=1) -> AveragingScan:
    """Skewness of the loss-tangent estimate versus trace-averaging time.

    For each ``k`` the raw sweeps are averaged in groups of ``k``, refit,
    turned into 1/Q_i - 1/q_hp and reduced to a skewness Z score.
    ``delta_t`` is ``k`` times the sampling interval. Failed fits are
    dropped and counted.
    """
    sweeps = list(sweeps)
    if len(sweeps) < 2:
        raise ValidationError("need at least two sweeps")
    ts = np.array([s.metadata.timestamp_s for s in sweeps])
    steps = np.diff(ts)
    if np.any(steps <= 0):
        raise ValidationError("sweep timestamps must be strictly increasing")
    dt = float(np.median(steps))
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValidationError("sweeps must be uniformly spaced in time")
    if not q_hp > 0:
        raise ValidationError("q_hp must be positive")
    k_values = np.asarray(k_values, dtype=int)
    if np.any(k_values < 1):
        raise ValidationError("k values must be >= 1")

    z, g1, used, failed = [], [], [], []
    for k in k_values:
        fits = fit_many(average_traces(sweeps, int(k)), threads)
        q = np.array([f.q_i for f in fits if f.converged])
        failed.append(len(fits) - q.size)
        used.append(q.size)
        if q.size < 8:
            z.append(np.nan)
            g1.append(np.nan)
            continue
        fd = 1.0 / q - 1.0 / q_hp
        z.append(skewness_z(fd))
        g1.append(sample_skewness(fd))
    return AveragingScan(k_values, k_values * dt, np.array(z), np.array(g1), np.array(used), np.array(failed))
