"""Resonance fitting of hanger S21 sweeps.

The pipeline follows the usual circle-fit recipe: remove the cable delay,
fit a circle to the resonance in the complex plane, fit the phase around the
circle centre for (f_r, Q), read the off-resonant point and the diameter for
A, phi and |Q_c|, then polish all seven real parameters with a joint
least-squares fit of the complex model. Confidence intervals come from the
linearized covariance of that last step.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import FitError, NonPhysicalError, ValidationError
from .model import TWO_PI, ResonatorParams, internal_q
from .series import FrequencySweep

# two-sided 68% half-width in units of sigma
Z68 = float(stats.norm.ppf(0.84))

PARAM_NAMES = ("amplitude_re", "amplitude_im", "delay", "f_r", "loaded_q", "coupling_q_mag", "phi")


@dataclass
class ResonatorFit:
    """Result of :func:`fit_resonance`.

    When ``converged`` is False, ``params`` may be None and ``q_i`` NaN;
    whatever intermediate estimates exist are kept in ``values``.
    """

    params: ResonatorParams | None
    q_i: float
    sigma68: dict
    residual_rms: float
    converged: bool
    message: str = ""
    values: dict = field(default_factory=dict)
    covariance: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "converged": self.converged,
            "message": self.message,
            "q_i": self.q_i,
            "residual_rms": self.residual_rms,
            "sigma68": dict(self.sigma68),
        }
        if self.params is not None:
            p = self.params
            out["params"] = {
                "amplitude_re": p.amplitude.real,
                "amplitude_im": p.amplitude.imag,
                "delay_s": p.delay,
                "f_r_hz": p.f_r,
                "loaded_q": p.loaded_q,
                "coupling_q_mag": p.coupling_q_mag,
                "phi_rad": p.phi,
            }
        else:
            out["partial"] = {k: float(v) for k, v in self.values.items()}
        return out


# --------------------------------------------------------------------------
# circle fit


def _taubin(u, v):
    """Algebraic Taubin circle fit on centred coordinates (Chernov's SVD form)."""
    zz = u * u + v * v
    zmean = zz.mean()
    if not zmean > 0:
        raise ValidationError("points are coincident; no circle is defined")
    z0 = (zz - zmean) / (2.0 * np.sqrt(zmean))
    _, sv, vh = np.linalg.svd(np.column_stack([z0, u, v]), full_matrices=False)
    a = vh[-1].copy()
    a0 = a[0] / (2.0 * np.sqrt(zmean))
    if abs(a0) < 1e-12 * np.hypot(a[1], a[2]) or sv[0] == 0:
        raise ValidationError("points are collinear; no circle is defined")
    a3 = -zmean * a0
    cx = -a[1] / (2.0 * a0)
    cy = -a[2] / (2.0 * a0)
    radius = np.sqrt(a[1] ** 2 + a[2] ** 2 - 4.0 * a0 * a3) / (2.0 * abs(a0))
    return cx, cy, radius


def fit_circle(points, weights=None, refine=True):
    """Least-squares circle through complex points.

    An algebraic Taubin fit provides the start; with ``refine`` the centre
    and radius are then polished by minimizing weighted geometric distances.

    Returns
    -------
    center : complex
    radius : float
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise ValidationError(f"a circle fit needs at least 3 points, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("points must be finite")
    mean = z.mean()
    scale = np.sqrt(np.mean(np.abs(z - mean) ** 2))
    if not scale > 0:
        raise ValidationError("points are coincident; no circle is defined")
    w = (z - mean) / scale
    u, v = w.real, w.imag
    cx, cy, r = _taubin(u, v)
    if r > 1e6:
        raise ValidationError("points are collinear; no circle is defined")

    if refine:
        sw = np.ones_like(u) if weights is None else np.sqrt(np.asarray(weights, dtype=float))

        def resid(p):
            return sw * (np.hypot(u - p[0], v - p[1]) - p[2])

        def jac(p):
            dx, dy = u - p[0], v - p[1]
            d = np.hypot(dx, dy)
            d = np.where(d == 0, 1.0, d)
            return np.column_stack([-dx / d, -dy / d, -np.ones_like(d)]) * sw[:, None]

        sol = optimize.least_squares(resid, [cx, cy, r], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.all(np.isfinite(sol.x)) and sol.x[2] > 0:
            cx, cy, r = sol.x

    return mean + scale * complex(cx, cy), float(scale * abs(r))


# --------------------------------------------------------------------------
# cable delay


def _circle_residuals(z):
    mean = z.mean()
    scale = np.sqrt(np.mean(np.abs(z - mean) ** 2))
    w = (z - mean) / scale
    cx, cy, r = _taubin(w.real, w.imag)
    return np.hypot(w.real - cx, w.imag - cy) - r


def _estimate_delay(f, z, edge_fraction=0.1, refine=True):
    """Delay from the off-resonant phase slope, refined by circularity."""
    n = f.size
    if not np.all(np.isfinite(z)) or np.any(z == 0):
        raise FitError("trace contains zeros or non-finite values; phase is undefined")
    n_edge = max(2, int(round(edge_fraction * n)))
    idx = np.r_[0:n_edge, n - n_edge:n] if 2 * n_edge < n else np.arange(n)
    fc = 0.5 * (f[0] + f[-1])
    span = f[-1] - f[0]
    phase = np.unwrap(np.angle(z))
    design = np.column_stack([np.ones(idx.size), (f[idx] - fc) / span])
    coef, _, rank, _ = np.linalg.lstsq(design, phase[idx], rcond=None)
    if rank < 2:
        raise FitError("off-resonant phase fit is rank-deficient")
    u0 = -coef[1]  # = 2 pi span tau
    u = u0

    if refine:
        rel = (f - fc) / span

        def resid(p):
            return _circle_residuals(z * np.exp(1j * p[0] * rel))

        try:
            start = resid([u0])
            sol = optimize.least_squares(
                resid, [u0], method="trf", bounds=([u0 - np.pi], [u0 + np.pi]),
                xtol=1e-15, ftol=1e-15, gtol=1e-15,
            )
            if np.sum(sol.fun**2) <= np.sum(start**2):
                u = float(sol.x[0])
        except ValidationError:
            pass  # no circle to refine against (flat trace)
    return u / (TWO_PI * span)


def remove_cable_delay(sweep: FrequencySweep, edge_fraction=0.1):
    """Estimate and remove the linear phase of the line delay.

    The delay is first estimated from a straight-line fit to the unwrapped
    phase of the off-resonant ends of the sweep. The resonance still adds
    phase in the tails and circularity of the corrected trace is only a
    second-order criterion, so when the sweep contains a resolvable
    resonance the estimate is polished with a fit of the full model.

    Returns
    -------
    corrected : FrequencySweep
        The input multiplied by ``exp(+i 2 pi f tau)``.
    tau : float
        Delay estimate in seconds.
    """
    f = sweep.frequencies
    z = sweep.s21
    tau = _estimate_delay(f, z, edge_fraction)
    try:
        polished = _full_fit(f, z, tau)
    except (ValidationError, FitError, np.linalg.LinAlgError):
        polished = None
    if polished is not None and polished["success"]:
        tau = float(polished["p"][2])
    return sweep.with_s21(z * np.exp(1j * TWO_PI * f * tau)), float(tau)


# --------------------------------------------------------------------------
# phase fit


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _phase_model(f, theta0, q, f_r):
    return theta0 + 2.0 * np.arctan(2.0 * q * (1.0 - f / f_r))


def _phase_fit(f, w):
    """Fit theta(f) = theta0 + 2 atan(2Q(1 - f/f_r)) to the angle of ``w``."""
    theta = np.angle(w)
    # off-resonant point lies between the two ends of the sweep; the
    # resonance is the point diametrically opposite it
    off = np.angle(w[0] / abs(w[0]) + w[-1] / abs(w[-1]))
    k_res = int(np.argmax(np.abs(_wrap(theta - off))))
    f_r0 = f[k_res]
    theta0 = off + np.pi
    inside = np.abs(_wrap(theta - theta0)) < np.pi / 2
    if inside.sum() >= 2:
        fwhm = f[inside].max() - f[inside].min()
    else:
        fwhm = 2.0 * np.median(np.diff(f))
    fwhm = max(fwhm, np.median(np.diff(f)))
    q0 = f_r0 / fwhm
    lw = f_r0 / q0

    def resid(p):
        return _wrap(theta - _phase_model(f, p[0], q0 * p[1], f_r0 + lw * p[2]))

    sol = optimize.least_squares(resid, [theta0, 1.0, 0.0], method="lm", xtol=1e-12, ftol=1e-12)
    th, qs, fs = sol.x
    return float(th), float(abs(q0 * qs)), float(f_r0 + lw * fs)


# --------------------------------------------------------------------------
# joint refinement


def _model_and_jac(f, p, fc):
    """Model and complex jacobian with the delay referenced to ``fc``.

    ``p[0:2]`` is A*exp(-i 2 pi fc tau) so that the delay and the global
    phase are not collinear for narrow sweeps.
    """
    ar, ai, tau, f_r, q, qc, phi = p
    a = complex(ar, ai)
    df = f - fc
    e = np.exp(-1j * TWO_PI * df * tau)
    x = (f - f_r) / f_r
    d = 1.0 + 2j * q * x
    r = (q / qc) * np.exp(1j * phi) / d
    b = 1.0 - r
    ae = a * e
    s = ae * b
    jac = np.empty((f.size, 7), dtype=complex)
    jac[:, 0] = e * b
    jac[:, 1] = 1j * e * b
    jac[:, 2] = -1j * TWO_PI * df * s
    jac[:, 3] = -ae * r * 2j * q * f / (f_r**2 * d)
    jac[:, 4] = -ae * (r / q - r * 2j * x / d)
    jac[:, 5] = ae * r / qc
    jac[:, 6] = -1j * ae * r
    return s, jac


def _qi_gradient(q, qc, phi):
    q_i = 1.0 / (1.0 / q - np.cos(phi) / qc)
    g = np.zeros(7)
    g[4] = q_i**2 / q**2
    g[5] = -(q_i**2) * np.cos(phi) / qc**2
    g[6] = -(q_i**2) * np.sin(phi) / qc
    return g


def _failed(message, values=None, residual_rms=float("nan")):
    return ResonatorFit(None, float("nan"), {}, residual_rms, False, message, values or {})


def _full_fit(f, z, tau0):
    """Circle/phase initialization followed by the joint 7-parameter fit.

    Returns a dict with the physical parameter vector ``p`` (amplitude
    referenced to f = 0), its covariance and diagnostics. Raises on
    initialization failures.
    """
    corrected = z * np.exp(1j * TWO_PI * f * tau0)
    zc, radius = fit_circle(corrected)
    theta0, q0, f_r0 = _phase_fit(f, corrected - zc)

    off_point = zc + radius * np.exp(1j * (theta0 + np.pi))
    if not (abs(off_point) > 0 and q0 > 0):
        raise FitError("initialization produced a degenerate off-resonant point")
    centre = zc / off_point
    diameter = 2.0 * radius / abs(off_point)
    phi0 = float(np.angle(1.0 - centre))
    qc0 = q0 / diameter
    span = f[-1] - f[0]
    fc = 0.5 * (f[0] + f[-1])

    a_ref = off_point * np.exp(-1j * TWO_PI * fc * tau0)
    p0 = np.array([a_ref.real, a_ref.imag, tau0, f_r0, q0, qc0, phi0])
    amp = abs(off_point)
    scale = np.array([amp, amp, 1.0 / (TWO_PI * span), f_r0 / q0, q0, qc0, 1.0])
    initial = dict(zip(PARAM_NAMES, [off_point.real, off_point.imag, tau0, f_r0, q0, qc0, phi0]))

    def resid(u):
        s, _ = _model_and_jac(f, p0 + scale * u, fc)
        d = s - z
        return np.concatenate([d.real, d.imag])

    def jac(u):
        _, jc = _model_and_jac(f, p0 + scale * u, fc)
        jc = jc * scale
        return np.vstack([jc.real, jc.imag])

    try:
        sol = optimize.least_squares(
            resid, np.zeros(7), jac=jac, method="lm",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
        )
    except ValueError as exc:
        raise FitError(f"least squares failed: {exc}") from exc

    pr = p0 + scale * sol.x
    # back to the amplitude at f = 0 and propagate the covariance
    rot = np.exp(1j * TWO_PI * fc * pr[2])
    a_phys = complex(pr[0], pr[1]) * rot
    p = pr.copy()
    p[0], p[1] = a_phys.real, a_phys.imag
    t = np.eye(7)
    t[0, 0], t[1, 0] = rot.real, rot.imag
    t[0, 1], t[1, 1] = -rot.imag, rot.real
    da = 1j * TWO_PI * fc * a_phys
    t[0, 2], t[1, 2] = da.real, da.imag

    rss = float(np.sum(sol.fun**2))
    dof = max(2 * f.size - 7, 1)
    js = sol.jac
    _, sv, vh = np.linalg.svd(js, full_matrices=False)
    singular = sv[-1] <= sv[0] * 1e-13 * max(js.shape)
    if singular:
        cov = None
    else:
        cov_u = (vh.T / sv**2) @ vh * (rss / dof)
        cov = t @ (cov_u * np.outer(scale, scale)) @ t.T
    return {
        "p": p,
        "cov": cov,
        "rss": rss,
        "success": bool(sol.success) and not singular,
        "message": sol.message,
        "singular": singular,
        "initial": initial,
    }


def fit_resonance(sweep: FrequencySweep, min_diameter_snr=3.0) -> ResonatorFit:
    """Fit the hanger model to one sweep.

    Non-convergence is reported through ``converged=False`` rather than an
    exception so that long batches keep going.

    Raises
    ------
    NonPhysicalError
        If the converged parameters imply 1/Q_i <= 0.
    """
    f = sweep.frequencies
    z = sweep.s21
    try:
        tau0 = _estimate_delay(f, z)
        res = _full_fit(f, z, tau0)
    except (ValidationError, FitError, np.linalg.LinAlgError) as exc:
        return _failed(f"initialization failed: {exc}")

    p = res["p"]
    values = dict(zip(PARAM_NAMES, p))
    residual_rms = float(np.sqrt(res["rss"] / f.size))
    if res["singular"]:
        return _failed("parameters are not identifiable (singular jacobian)", values, residual_rms)
    cov = res["cov"]
    sig = np.sqrt(np.abs(np.diag(cov)))
    span = f[-1] - f[0]

    ar, ai, tau, f_r, q, qc, phi = p
    reasons = []
    if not res["success"]:
        reasons.append(str(res["message"]))
    if not (f[0] <= f_r <= f[-1]):
        reasons.append("f_r outside the sweep")
    if not (q > 0 and qc > 0):
        reasons.append("negative quality factor")
    elif f_r / q > 2.0 * span:
        reasons.append("linewidth exceeds the sweep span")
    diameter = q / qc if qc > 0 else 0.0
    d_sigma = np.hypot(sig[4] / q, sig[5] / qc) * abs(diameter) if q > 0 and qc > 0 else np.inf
    if not diameter > min_diameter_snr * d_sigma:
        reasons.append("resonance depth not significant")
    if not np.all(np.isfinite(sig)):
        reasons.append("non-finite covariance")
    if reasons:
        return _failed("; ".join(reasons), values, residual_rms)

    phi = float(_wrap(phi))
    q_i = internal_q(q, qc, phi)  # raises NonPhysicalError
    params = ResonatorParams(complex(ar, ai), tau, f_r, q, qc, phi)
    g = _qi_gradient(q, qc, phi)
    sigma68 = {
        "f_r": Z68 * sig[3],
        "loaded_q": Z68 * sig[4],
        "coupling_q_mag": Z68 * sig[5],
        "phi": Z68 * sig[6],
        "q_i": Z68 * float(np.sqrt(max(g @ cov @ g, 0.0))),
        "delay": Z68 * sig[2],
        "amplitude": Z68 * float(np.hypot(sig[0], sig[1])),
    }
    return ResonatorFit(params, q_i, sigma68, residual_rms, True, "ok", values, cov)


def _fit_for_batch(sweep):
    try:
        return fit_resonance(sweep)
    except NonPhysicalError as exc:
        return _failed(f"non-physical: {exc}")


def fit_many(sweeps, threads=1):
    """Fit many sweeps, optionally in worker processes; order is preserved.

    Non-physical results are reported as non-converged fits here so a batch
    never stops on one bad point.
    """
    sweeps = list(sweeps)
    if threads is None or threads <= 1 or len(sweeps) < 2:
        return [_fit_for_batch(s) for s in sweeps]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_fit_for_batch, sweeps, chunksize=max(1, len(sweeps) // (4 * threads))))


# --------------------------------------------------------------------------
# trace averaging


def average_traces(sweeps, k: int):
    """Average each group of ``k`` consecutive sweeps point by point.

    Returns ``len(sweeps) // k`` sweeps; a trailing partial group is dropped.
    Each output timestamp is the mean of its constituents.
    """
    sweeps = list(sweeps)
    k = int(k)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if not sweeps:
        return []
    grid = sweeps[0].frequencies
    for i, s in enumerate(sweeps[1:], start=1):
        if s.frequencies.shape != grid.shape or not np.array_equal(s.frequencies, grid):
            raise ValidationError(f"sweep {i} does not share the frequency grid of sweep 0")
    if k == 1:
        return sweeps
    n_out = len(sweeps) // k
    out = []
    for j in range(n_out):
        group = sweeps[j * k:(j + 1) * k]
        s21 = np.mean([s.s21 for s in group], axis=0)
        t = float(np.mean([s.metadata.timestamp_s for s in group]))
        out.append(group[0].with_s21(s21, timestamp_s=t))
    return out


def sweep_grid(f_r, loaded_q, span_linewidths=10.0, n_points=201, center=None):
    """Uniform grid spanning ``span_linewidths`` linewidths around ``center``."""
    center = f_r if center is None else center
    half = 0.5 * span_linewidths * f_r / loaded_q
    return np.linspace(center - half, center + half, int(n_points))
