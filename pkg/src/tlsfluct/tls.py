"""Loss-tangent extraction: power-sweep fits, the two-point estimator and
the sigma-vs-Q linear model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .circlefit import Z68
from .errors import IllPosedFitError, NegativeLossTangentWarning, ValidationError
from .model import TWO_PI, TLSModel, saturation_factor, thermal_factor
from .series import LossTangentSeries, QiTimeSeries


@dataclass(frozen=True)
class PowerSweepData:
    """Q_i measured at several mean photon numbers and one temperature."""

    mean_photons: np.ndarray
    q_i: np.ndarray
    q_i_sigma: np.ndarray
    temperature: float = 0.0
    f_r: float = 6e9

    def __post_init__(self):
        n = np.asarray(self.mean_photons, dtype=float)
        q = np.asarray(self.q_i, dtype=float)
        s = np.asarray(self.q_i_sigma, dtype=float)
        if not (n.ndim == q.ndim == s.ndim == 1 and n.size == q.size == s.size):
            raise ValidationError("mean_photons, q_i and q_i_sigma must be 1-D arrays of equal length")
        if n.size < 4:
            raise ValidationError(f"at least 4 power points are required, got {n.size}")
        if np.any(n <= 0):
            raise ValidationError("mean photon numbers must be strictly positive")
        if np.any(q <= 0) or np.any(s <= 0):
            raise ValidationError("q_i and q_i_sigma must be positive")
        if self.temperature < 0 or not self.f_r > 0:
            raise ValidationError("temperature must be >= 0 and f_r > 0")
        object.__setattr__(self, "mean_photons", n)
        object.__setattr__(self, "q_i", q)
        object.__setattr__(self, "q_i_sigma", s)


@dataclass(frozen=True)
class TLSFit:
    """Best-fit saturation-model parameters with 68% half-widths."""

    f_delta0: float
    n_c: float
    beta: float
    q_pi: float
    sigma68: dict
    chi2_reduced: float

    @property
    def model(self) -> TLSModel:
        return TLSModel(max(self.f_delta0, np.finfo(float).tiny), self.n_c, self.beta, self.q_pi)

    def inverse_q(self, mean_photons, temperature=0.0, f_r=6e9):
        therm = thermal_factor(TWO_PI * f_r, temperature)
        return self.f_delta0 * therm * saturation_factor(mean_photons, self.n_c, self.beta) + 1.0 / self.q_pi

    def to_dict(self):
        return {
            "f_delta0": self.f_delta0,
            "n_c": self.n_c,
            "beta": self.beta,
            "q_pi": self.q_pi,
            "sigma68": dict(self.sigma68),
            "chi2_reduced": self.chi2_reduced,
        }


def fit_power_dependence(data: PowerSweepData, min_decades=3.0) -> TLSFit:
    """Weighted least-squares fit of 1/Q_i(<n>) to the saturation model.

    Residuals are formed in 1/Q_i with sigma_{1/Q} = sigma_Q / Q^2. The fit
    runs in (F delta, log n_c, beta, 1/Q_PI) with beta bounded to (0, 1].

    Raises
    ------
    IllPosedFitError
        If the photon range covers fewer than ``min_decades`` decades or
        the optimizer fails.
    """
    n = data.mean_photons
    decades = np.log10(n.max() / n.min())
    if decades < min_decades:
        raise IllPosedFitError(f"photon range spans {decades:.2f} decades; need >= {min_decades}")
    y = 1.0 / data.q_i
    sy = data.q_i_sigma / data.q_i**2
    therm = thermal_factor(TWO_PI * data.f_r, data.temperature)
    logn = np.log(n)

    def model(p):
        fd, lnc, beta, ipi = p
        return fd * therm * (1.0 + n / np.exp(lnc)) ** (-beta) + ipi

    def resid(p):
        return (model(p) - y) / sy

    # scale the linear parameters to O(1)
    ys = float(np.median(y))
    x_scale = np.array([ys, 1.0, 1.0, ys])
    order = np.argsort(n)
    lo, hi = y[order[0]], y[order[-1]]
    fd0 = max(lo - hi, 0.1 * ys)
    ipi0 = max(hi, 0.01 * ys)
    lnc0 = 0.5 * (logn.min() + logn.max())
    # n_c is only identifiable inside (roughly) the measured photon range
    pad = np.log(10.0)
    lower = [-np.inf, logn.min() - pad, 1e-6, 0.0]
    upper = [np.inf, logn.max() + pad, 1.0, np.inf]
    try:
        sol = optimize.least_squares(
            resid, [fd0, lnc0, 0.3, ipi0], bounds=(lower, upper), x_scale=x_scale,
            method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=10000,
        )
    except ValueError as exc:
        raise IllPosedFitError(f"power-dependence fit failed: {exc}") from exc
    if not sol.success:
        raise IllPosedFitError(f"power-dependence fit did not converge: {sol.message}")
    fd, lnc, beta, ipi = sol.x
    if not ipi > 0:
        raise IllPosedFitError("fitted power-independent loss is not positive")

    dof = max(n.size - 4, 1)
    chi2 = float(np.sum(sol.fun**2) / dof)
    _, sv, vh = np.linalg.svd(sol.jac, full_matrices=False)
    if sv[-1] <= sv[0] * 1e-12:
        cov = np.full((4, 4), np.inf)
    else:
        # measurement sigmas are taken as absolute
        cov = (vh.T / sv**2) @ vh
    sig = np.sqrt(np.abs(np.diag(cov)))
    n_c = float(np.exp(lnc))
    q_pi = 1.0 / ipi
    sigma68 = {
        "f_delta0": Z68 * sig[0],
        "n_c": Z68 * sig[1] * n_c,
        "beta": Z68 * sig[2],
        "q_pi": Z68 * sig[3] * q_pi**2,
    }
    return TLSFit(float(fd), n_c, float(beta), float(q_pi), sigma68, chi2)


def interleaved_loss_tangent(q_lp, q_hp, warn=True):
    """Two-point estimate 1/Q_LP - 1/Q_HP of the TLS loss tangent.

    Negative values are returned unchanged; a NegativeLossTangentWarning
    reports how many occurred.
    """
    q_lp = np.asarray(q_lp, dtype=float)
    q_hp = np.asarray(q_hp, dtype=float)
    if np.any(q_lp <= 0) or np.any(q_hp <= 0):
        raise ValidationError("quality factors must be positive")
    out = 1.0 / q_lp - 1.0 / q_hp
    n_neg = int(np.sum(out < 0))
    if warn and n_neg:
        warnings.warn(f"{n_neg} negative loss-tangent estimate(s)", NegativeLossTangentWarning, stacklevel=2)
    return float(out) if out.ndim == 0 else out


def plateau_bias(model: TLSModel, n_lp, n_hp):
    """Ratio estimator/F delta implied by incomplete saturation at both powers."""
    return saturation_factor(n_lp, model.n_c, model.beta) - saturation_factor(n_hp, model.n_c, model.beta)


def loss_tangent_series(lp: QiTimeSeries, hp: QiTimeSeries, max_pair_gap=None) -> LossTangentSeries:
    """Pair each LP point with the nearest-in-time HP point and apply the
    two-point estimator.

    Pairs further apart than ``max_pair_gap`` seconds (default: one LP
    sample interval) are dropped.
    """
    if len(lp) == 0 or len(hp) == 0:
        raise ValidationError("both series must be non-empty")
    gap = lp.sample_interval if max_pair_gap is None and len(lp) > 1 else (max_pair_gap or np.inf)
    idx = np.searchsorted(hp.timestamps, lp.timestamps)
    left = np.clip(idx - 1, 0, len(hp) - 1)
    right = np.clip(idx, 0, len(hp) - 1)
    dl = np.abs(lp.timestamps - hp.timestamps[left])
    dr = np.abs(hp.timestamps[right] - lp.timestamps)
    nearest = np.where(dr < dl, right, left)
    keep = np.minimum(dl, dr) <= gap
    values = interleaved_loss_tangent(lp.q_i[keep], hp.q_i[nearest[keep]], warn=True)
    return LossTangentSeries(lp.timestamps[keep], np.atleast_1d(values))


def fit_sigma_vs_q(points) -> float:
    """Slope c of the through-origin line sigma_Qi = c * Q_i.

    ``points`` is an (N, 2) array of (mean Q_i, sd Q_i) pairs.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValidationError("no points given")
    pts = pts.reshape(-1, 2)
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValidationError("means and standard deviations must be positive and finite")
    q, s = pts[:, 0], pts[:, 1]
    return float(np.dot(q, s) / np.dot(q, q))
