"""Containers for sweeps and time series passed between modules."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SweepMetadata:
    power_dbm: float = float("nan")
    temperature_k: float = 0.0
    timestamp_s: float = 0.0
    resonator_id: str = "res0"


@dataclass(frozen=True)
class FrequencySweep:
    """Complex S21 over a strictly increasing frequency grid."""

    frequencies: np.ndarray
    s21: np.ndarray
    metadata: SweepMetadata = field(default_factory=SweepMetadata)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        z = np.asarray(self.s21, dtype=complex)
        if f.ndim != 1 or z.ndim != 1:
            raise ValidationError("frequencies and s21 must be one-dimensional")
        if f.size != z.size:
            raise ValidationError(f"length mismatch: {f.size} frequencies vs {z.size} S21 values")
        if f.size < 3:
            raise ValidationError(f"a sweep needs at least 3 points, got {f.size}")
        bad = np.flatnonzero(np.diff(f) <= 0)
        if bad.size:
            raise ValidationError(f"frequencies not strictly increasing at index {bad[0] + 1}")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s21", z)

    def __len__(self):
        return self.frequencies.size

    def with_s21(self, s21, **meta_changes) -> "FrequencySweep":
        meta = replace(self.metadata, **meta_changes) if meta_changes else self.metadata
        return FrequencySweep(self.frequencies, s21, meta)


def _strictly_increasing(t, what="timestamps"):
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ValidationError(f"{what} not strictly increasing at index {bad[0] + 1}")


@dataclass(frozen=True)
class QiTimeSeries:
    """Fitted internal quality factors over time at one power/temperature.

    ``f_r`` and ``qc_mag`` (with their sigmas) are optional companions used
    for frequency-noise and coupling-stability analyses.
    """

    timestamps: np.ndarray
    q_i: np.ndarray
    q_i_sigma: np.ndarray
    power_dbm: float = float("nan")
    temperature_k: float = 0.0
    label: str = ""
    f_r: np.ndarray | None = None
    f_r_sigma: np.ndarray | None = None
    qc_mag: np.ndarray | None = None
    qc_sigma: np.ndarray | None = None
    n_failed: int = 0

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        object.__setattr__(self, "timestamps", t)
        for name in ("q_i", "q_i_sigma", "f_r", "f_r_sigma", "qc_mag", "qc_sigma"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.shape != t.shape:
                raise ValidationError(f"{name} has shape {value.shape}, expected {t.shape}")
            object.__setattr__(self, name, value)
        _strictly_increasing(t)

    def __len__(self):
        return self.timestamps.size

    @property
    def sample_interval(self) -> float:
        return float(np.median(np.diff(self.timestamps)))

    def normalized(self, column="q_i"):
        """(x - <x>)/<x> for one of the value columns."""
        x = getattr(self, column)
        if x is None:
            raise ValidationError(f"series has no {column} column")
        mean = x.mean()
        return (x - mean) / mean


@dataclass(frozen=True)
class LossTangentSeries:
    """Effective TLS loss tangent estimates over time.

    Estimates from the interleaved estimator can be negative; those samples
    are kept but ``valid`` marks them False so log-normal analyses can
    exclude them explicitly.
    """

    timestamps: np.ndarray
    f_delta_tls: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        x = np.asarray(self.f_delta_tls, dtype=float)
        if t.shape != x.shape:
            raise ValidationError("timestamps and f_delta_tls differ in length")
        _strictly_increasing(t)
        valid = np.isfinite(x) & (x > 0) if self.valid is None else np.asarray(self.valid, dtype=bool)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "f_delta_tls", x)
        object.__setattr__(self, "valid", valid)

    def __len__(self):
        return self.timestamps.size

    @property
    def n_flagged(self) -> int:
        return int((~self.valid).sum())

    @property
    def span(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) if len(self) else 0.0

    def positive(self) -> "LossTangentSeries":
        """Only the valid (strictly positive) samples."""
        keep = self.valid
        return LossTangentSeries(self.timestamps[keep], self.f_delta_tls[keep], np.ones(keep.sum(), bool))
