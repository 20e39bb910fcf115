"""Forward physics for a hanger-coupled resonator with saturable TLS loss.

Everything here is pure and deterministic. Frequencies are in Hz, angular
frequencies in rad/s, temperatures in K and powers in dBm unless a name says
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import NonPhysicalError, ValidationError

HBAR = constants.hbar
K_B = constants.k
TWO_PI = 2.0 * np.pi

DEFAULT_ATTENUATION_DB = 90.0


def internal_q(loaded_q, coupling_q_mag, phi):
    """Internal quality factor from the loaded Q and the complex coupling Q.

    Uses ``1/Q_i = 1/Q - cos(phi)/|Q_c|``. Works elementwise on arrays.

    Raises
    ------
    NonPhysicalError
        If the implied internal loss is not strictly positive.
    """
    loaded_q = np.asarray(loaded_q, dtype=float)
    coupling_q_mag = np.asarray(coupling_q_mag, dtype=float)
    if np.any(loaded_q <= 0) or np.any(coupling_q_mag <= 0):
        raise ValidationError("loaded_q and coupling_q_mag must be positive")
    inv = 1.0 / loaded_q - np.cos(phi) / coupling_q_mag
    if np.any(~(inv > 0)):
        raise NonPhysicalError(f"1/Q_i = {inv} is not positive")
    q_i = 1.0 / inv
    return float(q_i) if q_i.ndim == 0 else q_i


def loaded_q_from_internal(q_i, coupling_q_mag, phi):
    """Inverse of :func:`internal_q` for the loaded quality factor."""
    return 1.0 / (1.0 / np.asarray(q_i, dtype=float) + np.cos(phi) / coupling_q_mag)


@dataclass(frozen=True)
class ResonatorParams:
    """Parameters of the hanger transmission model.

    ``amplitude`` is the complex line attenuation A, ``delay`` the cable
    delay tau in seconds, ``coupling_q_mag`` is |Q_c| and ``phi`` the
    impedance-mismatch angle (Q_c = |Q_c| exp(-i phi)).
    """

    amplitude: complex
    delay: float
    f_r: float
    loaded_q: float
    coupling_q_mag: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        for name in ("delay", "f_r", "loaded_q", "coupling_q_mag", "phi"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.f_r <= 0 or self.loaded_q <= 0 or self.coupling_q_mag <= 0:
            raise ValidationError("f_r, loaded_q and coupling_q_mag must be positive")
        if 1.0 / self.loaded_q - np.cos(self.phi) / self.coupling_q_mag <= 0:
            raise NonPhysicalError(
                "loaded_q, coupling_q_mag and phi imply a non-positive internal loss"
            )

    @classmethod
    def from_internal(cls, q_i, coupling_q_mag, phi=0.0, f_r=6e9, amplitude=1.0, delay=0.0):
        """Build parameters from Q_i instead of the loaded Q."""
        q = float(loaded_q_from_internal(q_i, coupling_q_mag, phi))
        return cls(amplitude, delay, f_r, q, coupling_q_mag, phi)

    @property
    def q_i(self) -> float:
        return internal_q(self.loaded_q, self.coupling_q_mag, self.phi)

    @property
    def omega_r(self) -> float:
        return TWO_PI * self.f_r

    @property
    def linewidth(self) -> float:
        """Full width at half maximum in Hz (f_r / Q)."""
        return self.f_r / self.loaded_q

    def replace(self, **changes) -> "ResonatorParams":
        values = {
            "amplitude": self.amplitude,
            "delay": self.delay,
            "f_r": self.f_r,
            "loaded_q": self.loaded_q,
            "coupling_q_mag": self.coupling_q_mag,
            "phi": self.phi,
        }
        values.update(changes)
        return ResonatorParams(**values)


@dataclass(frozen=True)
class TLSModel:
    """Saturable TLS loss model parameters.

    ``f_delta0`` is the effective loss tangent F*delta0_TLS, ``n_c`` the
    critical photon number, ``beta`` the saturation exponent and ``q_pi``
    the power-independent quality factor.
    """

    f_delta0: float
    n_c: float
    beta: float
    q_pi: float

    def __post_init__(self):
        for name in ("f_delta0", "n_c", "beta", "q_pi"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {value}")
            object.__setattr__(self, name, value)
        if self.beta > 1:
            raise ValidationError(f"beta must be <= 1, got {self.beta}")


@dataclass(frozen=True)
class Environment:
    """Resonance frequency, bath temperature and mean photon number.

    ``mean_photons`` may be an array to evaluate a whole power sweep at once.
    """

    omega_r: float
    temperature: float = 0.0
    mean_photons: float | np.ndarray = 0.0

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ValidationError("omega_r must be positive")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if np.any(np.asarray(self.mean_photons) < 0):
            raise ValidationError("mean_photons must be >= 0")


def eval_s21(f, p: ResonatorParams):
    """Complex hanger transmission at frequency ``f`` (scalar or array)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValidationError("frequencies must be positive")
    x = (f - p.f_r) / p.f_r
    resonance = (p.loaded_q / p.coupling_q_mag) * np.exp(1j * p.phi) / (1.0 + 2j * p.loaded_q * x)
    s21 = p.amplitude * np.exp(-1j * TWO_PI * f * p.delay) * (1.0 - resonance)
    return complex(s21) if s21.ndim == 0 else s21


def thermal_factor(omega_r, temperature):
    """tanh(hbar*omega/2kT), taken as exactly 1 at T = 0."""
    temperature = np.asarray(temperature, dtype=float)
    with np.errstate(divide="ignore"):
        arg = HBAR * omega_r / (2.0 * K_B * temperature)
    out = np.where(temperature > 0, np.tanh(arg), 1.0)
    return float(out) if out.ndim == 0 else out


def saturation_factor(mean_photons, n_c, beta):
    """TLS saturation (1 + n/n_c)^-beta."""
    return (1.0 + np.asarray(mean_photons, dtype=float) / n_c) ** (-beta)


def tls_inverse_q(m: TLSModel, env: Environment):
    """Internal loss 1/Q_i from the TLS saturation model."""
    loss = (
        m.f_delta0
        * thermal_factor(env.omega_r, env.temperature)
        * saturation_factor(env.mean_photons, m.n_c, m.beta)
        + 1.0 / m.q_pi
    )
    return float(loss) if np.ndim(loss) == 0 else loss


def dbm_to_watt(power_dbm):
    return 10.0 ** ((np.asarray(power_dbm, dtype=float) - 30.0) / 10.0)


def photon_number(power_dbm, total_attenuation_db, p: ResonatorParams):
    """Mean intracavity photon number for a given source power.

    ``<n> = 2 Q^2 P_in / (hbar omega_r^2 |Q_c|)`` with the power at the device
    ``P_in`` obtained by subtracting the line attenuation from the source
    power.
    """
    if total_attenuation_db < 0:
        raise ValidationError("total_attenuation_db must be >= 0")
    return photon_number_from_q(
        power_dbm, total_attenuation_db, p.loaded_q, p.coupling_q_mag, p.f_r
    )


def photon_number_from_q(power_dbm, total_attenuation_db, loaded_q, coupling_q_mag, f_r):
    """Array-friendly core of :func:`photon_number`."""
    p_in = dbm_to_watt(np.asarray(power_dbm, dtype=float) - total_attenuation_db)
    omega = TWO_PI * np.asarray(f_r, dtype=float)
    n = 2.0 * np.asarray(loaded_q) ** 2 * p_in / (HBAR * omega**2 * np.asarray(coupling_q_mag))
    return float(n) if np.ndim(n) == 0 else n


def decay_rate(f_r, q_i):
    """Internal decay rate Gamma_i = 2 pi f_r / Q_i in rad/s."""
    f_r = np.asarray(f_r, dtype=float)
    q_i = np.asarray(q_i, dtype=float)
    if np.any(f_r <= 0) or np.any(q_i <= 0):
        raise ValidationError("f_r and q_i must be positive")
    rate = TWO_PI * f_r / q_i
    return float(rate) if rate.ndim == 0 else rate
