"""Simulation and analysis of TLS-driven internal quality factor fluctuations."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    FitError,
    IllPosedFitError,
    NegativeLossTangentWarning,
    NonPhysicalError,
    ValidationError,
)
from .model import (  # noqa: E402
    Environment,
    ResonatorParams,
    TLSModel,
    decay_rate,
    eval_s21,
    internal_q,
    photon_number,
    tls_inverse_q,
)
from .series import FrequencySweep, LossTangentSeries, QiTimeSeries, SweepMetadata  # noqa: E402

__all__ = [
    "Environment",
    "FitError",
    "FrequencySweep",
    "IllPosedFitError",
    "LossTangentSeries",
    "NegativeLossTangentWarning",
    "NonPhysicalError",
    "QiTimeSeries",
    "ResonatorParams",
    "SweepMetadata",
    "TLSModel",
    "ValidationError",
    "decay_rate",
    "eval_s21",
    "internal_q",
    "photon_number",
    "tls_inverse_q",
]
