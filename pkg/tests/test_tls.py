import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsfluct.errors import IllPosedFitError, NegativeLossTangentWarning, ValidationError
from tlsfluct.model import TWO_PI, Environment, TLSModel, tls_inverse_q
from tlsfluct.series import QiTimeSeries
from tlsfluct.synth import FluctuationSpec, default_resonator, default_tls_model, simulate_interleaved_run
from tlsfluct.tls import (
    PowerSweepData,
    fit_power_dependence,
    fit_sigma_vs_q,
    interleaved_loss_tangent,
    loss_tangent_series,
    plateau_bias,
)

TRUTH = TLSModel(9e-7, 2.0, 0.5, 1e6)
PHOTONS = np.logspace(-1, 6, 30)


def power_sweep(model, seed, rel=0.01, photons=PHOTONS, scale=1.0):
    q = 1.0 / tls_inverse_q(model, Environment(TWO_PI * 6e9, 0.0, photons))
    noisy = q * (1 + rel * np.random.default_rng(seed).standard_normal(q.size))
    return PowerSweepData(photons, scale * noisy, scale * rel * q)


class TestPowerFit:
    def test_recovery_ensemble(self):
        fits = [fit_power_dependence(power_sweep(TRUTH, s)) for s in range(20)]
        assert np.median([f.f_delta0 for f in fits]) == pytest.approx(9e-7, rel=0.03)
        assert np.median([f.beta for f in fits]) == pytest.approx(0.5, rel=0.05)
        assert np.median([f.q_pi for f in fits]) == pytest.approx(1e6, rel=0.01)

    def test_noiseless_exact(self):
        q = 1.0 / tls_inverse_q(TRUTH, Environment(TWO_PI * 6e9, 0.0, PHOTONS))
        fit = fit_power_dependence(PowerSweepData(PHOTONS, q, np.full(PHOTONS.size, 1e3)))
        assert fit.f_delta0 == pytest.approx(9e-7, rel=1e-6)
        assert fit.beta == pytest.approx(0.5, rel=1e-6)
        assert fit.n_c == pytest.approx(2.0, rel=1e-5)
        assert fit.q_pi == pytest.approx(1e6, rel=1e-8)

    def test_null_model(self):
        covered = 0
        for seed in range(40):
            q = np.full(PHOTONS.size, 1e6) * (1 + 0.01 * np.random.default_rng(seed).standard_normal(PHOTONS.size))
            fit = fit_power_dependence(PowerSweepData(PHOTONS, q, np.full(PHOTONS.size, 1e4)))
            covered += abs(fit.f_delta0) <= fit.sigma68["f_delta0"]
        assert covered >= 0.6 * 40

    def test_fitted_curve_monotone(self):
        fit = fit_power_dependence(power_sweep(TRUTH, 3))
        inv = fit.inverse_q(np.logspace(-2, 7, 200))
        assert np.all(np.diff(1.0 / inv) >= 0)

    def test_scale_consistency(self):
        a = fit_power_dependence(power_sweep(TRUTH, 5))
        b = fit_power_dependence(power_sweep(TRUTH, 5, scale=3.0))
        assert b.q_pi == pytest.approx(3.0 * a.q_pi, rel=1e-6)
        assert b.f_delta0 == pytest.approx(a.f_delta0 / 3.0, rel=1e-6)
        assert b.n_c == pytest.approx(a.n_c, rel=1e-5)
        assert b.beta == pytest.approx(a.beta, rel=1e-5)

    def test_beta_bounded(self):
        steep = TLSModel(9e-7, 2.0, 1.0, 1e6)
        fit = fit_power_dependence(power_sweep(steep, 1, rel=0.05))
        assert 0 < fit.beta <= 1.0

    def test_temperature_factor_used(self):
        photons = PHOTONS
        env = Environment(TWO_PI * 6e9, 0.3, photons)
        q = 1.0 / tls_inverse_q(TRUTH, env)
        fit = fit_power_dependence(PowerSweepData(photons, q, q * 1e-3, temperature=0.3, f_r=6e9))
        assert fit.f_delta0 == pytest.approx(9e-7, rel=1e-5)

    def test_insufficient_span(self):
        with pytest.raises(IllPosedFitError):
            fit_power_dependence(power_sweep(TRUTH, 0, photons=np.logspace(0, 2, 10)))

    def test_data_validation(self):
        with pytest.raises(ValidationError):
            PowerSweepData([1, 2, 3], [1, 2, 3], [1, 1, 1])
        with pytest.raises(ValidationError):
            PowerSweepData([0, 1, 2, 3], [1, 2, 3, 4], [1, 1, 1, 1])

    def test_model_property(self):
        fit = fit_power_dependence(power_sweep(TRUTH, 2))
        assert isinstance(fit.model, TLSModel)
        assert set(fit.to_dict()["sigma68"]) == {"f_delta0", "n_c", "beta", "q_pi"}


class TestInterleavedEstimator:
    def test_equal(self):
        assert interleaved_loss_tangent(5e5, 5e5) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e3, 1e8), st.floats(1e3, 1e8))
    def test_antisymmetric(self, a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeLossTangentWarning)
            assert interleaved_loss_tangent(a, b) == -interleaved_loss_tangent(b, a)

    def test_negative_flagged(self):
        with pytest.warns(NegativeLossTangentWarning):
            out = interleaved_loss_tangent(np.array([5e5, 1.2e6]), np.array([1e6, 1e6]))
        assert out[1] < 0

    def test_closed_form_plateau_bias(self):
        m = TRUTH
        n_lp, n_hp = 0.05, 1e5
        q_lp = 1.0 / tls_inverse_q(m, Environment(TWO_PI * 6e9, 0.0, n_lp))
        q_hp = 1.0 / tls_inverse_q(m, Environment(TWO_PI * 6e9, 0.0, n_hp))
        est = interleaved_loss_tangent(q_lp, q_hp)
        assert est == pytest.approx(m.f_delta0 * plateau_bias(m, n_lp, n_hp), rel=1e-9)
        assert plateau_bias(m, 1e-9, 1e30) == pytest.approx(1.0, abs=1e-9)

    def test_series_statistics(self):
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), FluctuationSpec(seed=8))
        fd = loss_tangent_series(run.lp, run.hp)
        assert len(fd) == len(run.lp)
        assert fd.f_delta_tls.mean() == pytest.approx(9e-7, rel=0.1)
        assert fd.f_delta_tls.std() == pytest.approx(2.2e-7, rel=0.15)

    def test_series_pairing_gap(self):
        lp = QiTimeSeries([0.0, 60.0, 120.0], [5e5] * 3, [1e4] * 3)
        hp = QiTimeSeries([30.0, 400.0], [1e6] * 2, [1e3] * 2)
        fd = loss_tangent_series(lp, hp)
        assert list(fd.timestamps) == [0.0, 60.0]


class TestSigmaVsQ:
    def test_single_point(self):
        assert fit_sigma_vs_q([(4e5, 5.2e4)]) == pytest.approx(0.13, rel=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(1e3, 1e7), st.floats(1.0, 1e6)), min_size=1, max_size=20),
           st.floats(1e-3, 1e3))
    def test_scale_invariant(self, pts, c):
        scaled = [(c * q, c * s) for q, s in pts]
        assert fit_sigma_vs_q(scaled) == pytest.approx(fit_sigma_vs_q(pts), rel=1e-12)

    def test_exact_line(self):
        q = np.linspace(1e5, 1e6, 10)
        assert fit_sigma_vs_q(np.column_stack([q, 0.005 * q])) == pytest.approx(0.005, rel=1e-14)

    def test_empty(self):
        with pytest.raises(ValidationError):
            fit_sigma_vs_q([])
