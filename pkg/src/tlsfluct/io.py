"""CSV/JSON file formats.

Every table is a plain CSV with one header row. Leading lines starting with
``#`` carry provenance (config hash, tool version) and are skipped on read.
Sweeps and spectra carry a JSON sidecar named ``<path>.meta.json``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .series import FrequencySweep, LossTangentSeries, QiTimeSeries, SweepMetadata

SWEEP_HEADER = ("freq_hz", "s21_re", "s21_im")
SERIES_HEADER = ("timestamp_s", "q_i", "q_i_sigma", "f_r_hz", "f_r_sigma_hz", "qc_mag", "qc_sigma")
LOSS_TANGENT_HEADER = ("timestamp_s", "f_delta_tls", "valid")
SPECTRUM_HEADER = ("freq_hz", "value")
POWER_CURVE_HEADER = ("mean_photons", "q_i", "q_i_sigma")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def provenance(config_hash=None):
    return {"tool_version": __version__, "config_sha256": config_hash or ""}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_table(path, header, columns, config_hash=None):
    """Write equal-length columns as CSV with full float precision."""
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    n = {c.shape[0] for c in cols}
    if len(n) > 1:
        raise ValidationError("columns differ in length")
    prov = provenance(config_hash)
    lines = [f"# tool_version={prov['tool_version']} config_sha256={prov['config_sha256']}", ",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path, header, converters=None):
    """Read a CSV written by :func:`write_table`; returns a dict of columns.

    Raises ValidationError on a wrong header or a row with the wrong number
    of fields (the row number is reported, counting data rows from 1).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    rows = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    got = tuple(h.strip() for h in rows[0].split(","))
    if got != tuple(header):
        raise ValidationError(f"{path}: malformed header {','.join(got)!r}, expected {','.join(header)!r}")
    converters = converters or {}
    data = {h: [] for h in header}
    for i, line in enumerate(rows[1:], start=1):
        fields = line.split(",")
        if len(fields) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(fields)} fields, expected {len(header)}")
        for h, v in zip(header, fields):
            try:
                data[h].append(converters.get(h, float)(v))
            except ValueError as exc:
                raise ValidationError(f"{path}: row {i}, column {h}: {exc}") from exc
    return {h: np.array(v) for h, v in data.items()}


def write_json(path, obj, config_hash=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(obj)
    payload["provenance"] = provenance(config_hash)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


# --------------------------------------------------------------------------
# sweeps


def write_sweep(path, sweep: FrequencySweep, config_hash=None):
    write_table(path, SWEEP_HEADER, [sweep.frequencies, sweep.s21.real, sweep.s21.imag], config_hash)
    m = sweep.metadata
    meta = {
        "power_dbm": m.power_dbm,
        "temperature_k": m.temperature_k,
        "timestamp_s": m.timestamp_s,
        "resonator_id": m.resonator_id,
    }
    write_json(sidecar_path(path), meta, config_hash)
    return Path(path)


def read_sweep(path) -> FrequencySweep:
    side = sidecar_path(path)
    if not side.exists():
        raise ValidationError(f"missing sidecar {side}")
    meta = read_json(side)
    cols = read_table(path, SWEEP_HEADER)
    try:
        md = SweepMetadata(
            float(meta.get("power_dbm", "nan")),
            float(meta.get("temperature_k", 0.0)),
            float(meta.get("timestamp_s", 0.0)),
            str(meta.get("resonator_id", "res0")),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{side}: bad metadata: {exc}") from exc
    f = cols["freq_hz"]
    bad = np.flatnonzero(np.diff(f) <= 0)
    if bad.size:
        raise ValidationError(f"{path}: frequencies not strictly increasing at data row {bad[0] + 2}")
    return FrequencySweep(f, cols["s21_re"] + 1j * cols["s21_im"], md)


# --------------------------------------------------------------------------
# time series


def _or_nan(x, n):
    return np.full(n, np.nan) if x is None else x


def write_series(path, s: QiTimeSeries, config_hash=None):
    n = len(s)
    write_table(
        path,
        SERIES_HEADER,
        [s.timestamps, s.q_i, s.q_i_sigma, _or_nan(s.f_r, n), _or_nan(s.f_r_sigma, n),
         _or_nan(s.qc_mag, n), _or_nan(s.qc_sigma, n)],
        config_hash,
    )
    write_json(sidecar_path(path), {
        "power_dbm": s.power_dbm,
        "temperature_k": s.temperature_k,
        "label": s.label,
        "n_failed": s.n_failed,
    }, config_hash)
    return Path(path)


def read_series(path) -> QiTimeSeries:
    cols = read_table(path, SERIES_HEADER)
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}

    def opt(name):
        v = cols[name]
        return None if np.all(np.isnan(v)) else v

    return QiTimeSeries(
        cols["timestamp_s"], cols["q_i"], cols["q_i_sigma"],
        float(meta.get("power_dbm", "nan")), float(meta.get("temperature_k", 0.0)),
        str(meta.get("label", "")),
        f_r=opt("f_r_hz"), f_r_sigma=opt("f_r_sigma_hz"), qc_mag=opt("qc_mag"), qc_sigma=opt("qc_sigma"),
        n_failed=int(meta.get("n_failed", 0)),
    )


def write_loss_tangent(path, s: LossTangentSeries, config_hash=None):
    return write_table(path, LOSS_TANGENT_HEADER, [s.timestamps, s.f_delta_tls, s.valid], config_hash)


def read_loss_tangent(path) -> LossTangentSeries:
    cols = read_table(path, LOSS_TANGENT_HEADER, {"valid": lambda v: bool(int(float(v)))})
    return LossTangentSeries(cols["timestamp_s"], cols["f_delta_tls"], cols["valid"].astype(bool))


def write_spectrum(path, spec, config_hash=None):
    write_table(path, SPECTRUM_HEADER, [spec.freqs, spec.values], config_hash)
    write_json(sidecar_path(path), spec.to_dict(), config_hash)
    return Path(path)


def read_spectrum(path):
    from .spectral import SpectrumEstimate

    cols = read_table(path, SPECTRUM_HEADER)
    meta = read_json(sidecar_path(path)) if sidecar_path(path).exists() else {}
    return SpectrumEstimate(
        cols["freq_hz"], cols["value"], int(meta.get("n_segments", 0)), str(meta.get("window", "")),
        int(meta.get("segment_length", 0)), str(meta.get("kind", "psd")),
    )


def write_power_curve(path, data, config_hash=None):
    write_table(path, POWER_CURVE_HEADER, [data.mean_photons, data.q_i, data.q_i_sigma], config_hash)
    write_json(sidecar_path(path), {"temperature_k": data.temperature, "f_r_hz": data.f_r}, config_hash)
    return Path(path)


def read_power_curve(path):
    from .tls import PowerSweepData

    cols = read_table(path, POWER_CURVE_HEADER)
    meta = read_json(sidecar_path(path)) if sidecar_path(path).exists() else {}
    return PowerSweepData(cols["mean_photons"], cols["q_i"], cols["q_i_sigma"],
                          float(meta.get("temperature_k", 0.0)), float(meta.get("f_r_hz", 6e9)))
