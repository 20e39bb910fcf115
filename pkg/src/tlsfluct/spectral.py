"""Welch spectra, coherence and power-law fits for normalized time series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ValidationError
from .series import QiTimeSeries


@dataclass(frozen=True)
class SpectrumEstimate:
    """One-sided spectral density or coherence on positive frequencies."""

    freqs: np.ndarray
    values: np.ndarray
    n_segments: int
    window_name: str
    segment_length: int
    kind: str = "psd"
    settings: dict = field(default_factory=dict)

    def band(self, f_lo, f_hi):
        keep = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return self.freqs[keep], self.values[keep]

    def value_at(self, f):
        """Log-log interpolated value at frequency ``f``."""
        if not (self.freqs[0] <= f <= self.freqs[-1]):
            raise ValidationError(f"{f} Hz lies outside [{self.freqs[0]}, {self.freqs[-1]}]")
        if self.kind == "psd":
            v = np.maximum(self.values, np.finfo(float).tiny)
            return float(np.exp(np.interp(np.log(f), np.log(self.freqs), np.log(v))))
        return float(np.interp(f, self.freqs, self.values))

    def to_dict(self):
        return {
            "kind": self.kind,
            "window": self.window_name,
            "segment_length": self.segment_length,
            "n_segments": self.n_segments,
            **self.settings,
        }


def default_segment_length(n):
    """Power of two nearest to n/8 (at least 8, at most n)."""
    target = max(n / 8.0, 8.0)
    seg = int(2 ** np.round(np.log2(target)))
    return int(min(max(seg, 8), n))


def _check(x, dt, segment_length, overlap_fraction):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("input must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite values")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if segment_length is None:
        segment_length = default_segment_length(x.size)
    segment_length = int(segment_length)
    if segment_length < 8:
        raise ValidationError(f"segment_length must be >= 8, got {segment_length}")
    if x.size < segment_length:
        raise ValidationError(f"series length {x.size} is shorter than segment_length {segment_length}")
    if not 0 <= overlap_fraction <= 0.9:
        raise ValidationError("overlap_fraction must lie in [0, 0.9]")
    noverlap = int(np.floor(overlap_fraction * segment_length))
    n_seg = 1 + (x.size - segment_length) // (segment_length - noverlap)
    return x, segment_length, noverlap, n_seg


def welch_psd(x, dt, segment_length=None, overlap_fraction=0.5, window="hann") -> SpectrumEstimate:
    """One-sided Welch power spectral density, DC bin dropped."""
    x, seg, nov, n_seg = _check(x, dt, segment_length, overlap_fraction)
    f, p = signal.welch(x, fs=1.0 / dt, window=window, nperseg=seg, noverlap=nov,
                        detrend="constant", scaling="density", return_onesided=True)
    return SpectrumEstimate(f[1:], p[1:], n_seg, str(window), seg, "psd",
                            {"overlap_fraction": overlap_fraction, "dt": dt})


def cross_spectrum(a, b, dt, segment_length=None, overlap_fraction=0.5, window="hann"):
    a, seg, nov, n_seg = _check(a, dt, segment_length, overlap_fraction)
    b = np.asarray(b, dtype=float)
    if b.shape != a.shape:
        raise ValidationError(f"length mismatch: {a.size} vs {b.size}")
    f, p = signal.csd(a, b, fs=1.0 / dt, window=window, nperseg=seg, noverlap=nov, detrend="constant")
    return f[1:], p[1:], n_seg, seg


def coherence(a, b, dt, segment_length=None, overlap_fraction=0.5, window="hann") -> SpectrumEstimate:
    """Magnitude-squared coherence |S_ab|^2 / (S_aa S_bb).

    Symmetric in ``a`` and ``b`` bit for bit: the inputs are put in a
    canonical order before any arithmetic.
    """
    a, seg, nov, n_seg = _check(a, dt, segment_length, overlap_fraction)
    b = np.asarray(b, dtype=float)
    if b.shape != a.shape:
        raise ValidationError(f"length mismatch: {a.size} vs {b.size}")
    _check(b, dt, seg, overlap_fraction)
    if n_seg < 2:
        raise ValidationError("coherence needs at least 2 segments (it is identically 1 for one)")
    if b.tobytes() < a.tobytes():
        a, b = b, a
    kw = dict(fs=1.0 / dt, window=window, nperseg=seg, noverlap=nov, detrend="constant")
    f, saa = signal.welch(a, **kw)
    _, sbb = signal.welch(b, **kw)
    _, sab = signal.csd(a, b, **kw)
    num = sab.real**2 + sab.imag**2
    den = saa * sbb
    with np.errstate(invalid="ignore", divide="ignore"):
        coh = np.where(den > 0, num / den, 0.0)
    coh = np.clip(coh, 0.0, 1.0)
    return SpectrumEstimate(f[1:], coh[1:], n_seg, str(window), seg, "coherence",
                            {"overlap_fraction": overlap_fraction, "dt": dt})


def fit_one_over_f(spec: SpectrumEstimate, band=None):
    """Fit S(f) = A / f^alpha by least squares of log S on log f.

    Returns ``(A, alpha)``.
    """
    if band is None:
        f, s = spec.freqs, spec.values
    else:
        f, s = spec.band(*band)
    keep = s > 0
    f, s = f[keep], s[keep]
    if f.size < 3:
        raise ValidationError(f"need >= 3 positive bins in the band, got {f.size}")
    slope, intercept = np.polyfit(np.log(f), np.log(s), 1)
    return float(np.exp(intercept)), float(-slope)


def lowest_decade_mean(spec: SpectrumEstimate):
    """Mean value over bins within a factor 10 of the lowest frequency."""
    f0 = spec.freqs[0]
    return float(np.mean(spec.values[spec.freqs <= 10.0 * f0]))


def resample_uniform(t, x, dt=None, t0=None, t1=None):
    """Linear interpolation of (t, x) onto a uniform grid.

    ``dt`` defaults to the median sampling interval.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.size < 2 or t.shape != x.shape:
        raise ValidationError("need matching time and value arrays with >= 2 samples")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("timestamps must be strictly increasing")
    dt = float(np.median(np.diff(t))) if dt is None else float(dt)
    t0 = t[0] if t0 is None else t0
    t1 = t[-1] if t1 is None else t1
    grid = t0 + dt * np.arange(int(np.floor((t1 - t0) / dt + 1e-9)) + 1)
    return grid, np.interp(grid, t, x)


def normalize(x):
    """(x - <x>) / <x>."""
    x = np.asarray(x, dtype=float)
    mean = x.mean()
    if mean == 0:
        raise ValidationError("cannot normalize a zero-mean series")
    return (x - mean) / mean


def series_psd(series: QiTimeSeries, column="q_i", segment_length=None, overlap_fraction=0.5, window="hann"):
    """Welch PSD of the normalized column after uniform resampling."""
    x = getattr(series, column)
    if x is None:
        raise ValidationError(f"series has no {column} column")
    _, y = resample_uniform(series.timestamps, normalize(x))
    spec = welch_psd(y, series.sample_interval, segment_length, overlap_fraction, window)
    spec.settings["resampling"] = "linear interpolation at the median interval"
    return spec


def aligned_pair(a: QiTimeSeries, b: QiTimeSeries, col_a="q_i", col_b="q_i"):
    """Both normalized series interpolated onto one uniform grid over their
    common time span, spaced by the larger median interval."""
    dt = max(a.sample_interval, b.sample_interval)
    t0 = max(a.timestamps[0], b.timestamps[0])
    t1 = min(a.timestamps[-1], b.timestamps[-1])
    if t1 <= t0:
        raise ValidationError("series do not overlap in time")
    grid, xa = resample_uniform(a.timestamps, normalize(getattr(a, col_a)), dt, t0, t1)
    _, xb = resample_uniform(b.timestamps, normalize(getattr(b, col_b)), dt, t0, t1)
    return grid, xa, xb, dt


def series_coherence(a: QiTimeSeries, b: QiTimeSeries, col_a="q_i", col_b="q_i",
                     segment_length=None, overlap_fraction=0.5, window="hann"):
    _, xa, xb, dt = aligned_pair(a, b, col_a, col_b)
    spec = coherence(xa, xb, dt, segment_length, overlap_fraction, window)
    spec.settings["resampling"] = "linear interpolation at the larger median interval"
    return spec
