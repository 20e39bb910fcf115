"""Run configuration: one JSON document with every block materialized."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .model import DEFAULT_ATTENUATION_DB, ResonatorParams, TLSModel
from .synth import FluctuationSpec, InterleavedSchedule, MeasurementModel


@dataclass
class ResonatorBlock:
    f_r_hz: float = 6.0e9
    q_i: float = 5.0e5
    coupling_q_mag: float = 5.0e5
    phi_rad: float = 0.0
    amplitude_re: float = 1.0
    amplitude_im: float = 0.0
    delay_s: float = 0.0

    def build(self) -> ResonatorParams:
        return ResonatorParams.from_internal(
            self.q_i, self.coupling_q_mag, self.phi_rad, self.f_r_hz,
            complex(self.amplitude_re, self.amplitude_im), self.delay_s,
        )


@dataclass
class TLSBlock:
    f_delta0: float = 9.0e-7
    n_c: float = 2.0
    beta: float = 0.5
    q_pi: float = 1.0e6

    def build(self) -> TLSModel:
        return TLSModel(self.f_delta0, self.n_c, self.beta, self.q_pi)


@dataclass
class FluctuationBlock:
    target_mean: float = 9.0e-7
    target_sd: float = 2.2e-7
    spectral_exponent: float = 1.0
    hp_relative_sd: float = 0.005
    freq_relative_sd: float = 0.0

    def build(self, seed) -> FluctuationSpec:
        return FluctuationSpec(**asdict(self), seed=seed)


@dataclass
class ScheduleBlock:
    idle_tau1_s: float = 3.0
    idle_tau2_s: float = 0.5
    point_durations_s: list = field(default_factory=lambda: [38.0, 9.0, 10.0])
    total_duration_s: float = 16 * 3600.0
    power_points_dbm: list = field(default_factory=lambda: [-75.0, -55.0, -15.0])

    def build(self) -> InterleavedSchedule:
        return InterleavedSchedule(self.idle_tau1_s, self.idle_tau2_s, tuple(self.point_durations_s),
                                   self.total_duration_s, tuple(self.power_points_dbm))


@dataclass
class MeasurementBlock:
    mode: str = "fast"
    fit_relative_sd: dict = field(default_factory=lambda: {"LP": 0.02, "MP": 0.005, "HP": 0.001})
    sweep_noise_sd: dict = field(default_factory=lambda: {"LP": 0.03, "MP": 0.005, "HP": 0.001})
    span_linewidths: float = 10.0
    n_points: int = 201
    temperature_k: float = 0.01
    attenuation_db: float = DEFAULT_ATTENUATION_DB

    def build(self, threads=1) -> MeasurementModel:
        return MeasurementModel(self.mode, dict(self.fit_relative_sd), dict(self.sweep_noise_sd),
                                self.span_linewidths, self.n_points, self.temperature_k,
                                self.attenuation_db, threads)


@dataclass
class AnalysisBlock:
    welch_window: str = "hann"
    segment_length: int | None = None
    overlap_fraction: float = 0.5
    window_sizes_s: list = field(default_factory=lambda: [h * 1800.0 for h in range(1, 33)])
    reference_span_s: float | None = None
    k_values: list = field(default_factory=lambda: [1, 2, 4, 8, 15, 30, 60, 91])
    timetrace_dt_s: float = 38.0
    timetrace_duration_s: float = 12 * 3600.0
    power_curve_dbm: list = field(default_factory=lambda: [-110.0 + 5.0 * k for k in range(21)])


_BLOCKS = {
    "resonator": ResonatorBlock,
    "tls": TLSBlock,
    "fluctuation": FluctuationBlock,
    "schedule": ScheduleBlock,
    "measurement": MeasurementBlock,
    "analysis": AnalysisBlock,
}


@dataclass
class RunConfig:
    resonator: ResonatorBlock = field(default_factory=ResonatorBlock)
    tls: TLSBlock = field(default_factory=TLSBlock)
    fluctuation: FluctuationBlock = field(default_factory=FluctuationBlock)
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    measurement: MeasurementBlock = field(default_factory=MeasurementBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    seed: int = 0
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(d) - set(_BLOCKS) - {"seed", "output_dir", "provenance"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, block in _BLOCKS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ValidationError(f"config block {name!r} must be an object")
            allowed = {f.name for f in fields(block)}
            bad = set(sub) - allowed
            if bad:
                raise ValidationError(f"unknown keys in {name!r}: {sorted(bad)}")
            kwargs[name] = block(**sub)
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        if "output_dir" in d:
            kwargs["output_dir"] = str(d["output_dir"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON of everything that affects results."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        """Build every block once so invalid values fail early."""
        self.resonator.build()
        self.tls.build()
        self.fluctuation.build(self.seed)
        self.schedule.build()
        self.measurement.build()
        a = self.analysis
        if not 0 <= a.overlap_fraction <= 0.9:
            raise ValidationError("analysis.overlap_fraction must lie in [0, 0.9]")
        return self
