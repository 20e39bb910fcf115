import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsfluct.circlefit import (
    Z68,
    average_traces,
    fit_circle,
    fit_many,
    fit_resonance,
    remove_cable_delay,
    sweep_grid,
)
from tlsfluct.errors import FitError, ValidationError
from tlsfluct.model import ResonatorParams, eval_s21, internal_q
from tlsfluct.series import FrequencySweep, SweepMetadata
from tlsfluct.synth import synth_sweep


def noiseless(p, n=201, span=10.0):
    f = sweep_grid(p.f_r, p.loaded_q, span, n)
    return FrequencySweep(f, eval_s21(f, p))


class TestFitCircle:
    def test_exact_circle(self):
        t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
        z = 0.5 + 0.25 * np.exp(1j * t)
        c, r = fit_circle(z)
        assert abs(c - 0.5) < 1e-12
        assert abs(r - 0.25) < 1e-12

    def test_partial_arc(self):
        t = np.linspace(0.2, 1.4, 30)
        z = (0.3 - 0.1j) + 2.0 * np.exp(1j * t)
        c, r = fit_circle(z)
        assert abs(c - (0.3 - 0.1j)) < 1e-10
        assert abs(r - 2.0) < 1e-10

    def test_noisy_points(self):
        rng = np.random.default_rng(3)
        t = rng.uniform(0, 2 * np.pi, 500)
        z = 0.5 + 0.25 * np.exp(1j * t) + 1e-3 * (rng.standard_normal(500) + 1j * rng.standard_normal(500))
        c, r = fit_circle(z)
        assert abs(c - 0.5) < 1e-2
        assert abs(r - 0.25) < 1e-2

    def test_two_points(self):
        with pytest.raises(ValidationError):
            fit_circle([0, 1j])

    def test_collinear(self):
        with pytest.raises(ValidationError):
            fit_circle(np.linspace(0, 1, 10) * (1 + 1j))

    def test_coincident(self):
        with pytest.raises(ValidationError):
            fit_circle(np.full(5, 1 + 1j))

    @settings(max_examples=100, deadline=None)
    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.floats(1e-3, 10.0), st.floats(0.0, 2 * np.pi), st.floats(0.5, 2 * np.pi))
    def test_arcs_recovered(self, centre, radius, start, extent):
        t = start + np.linspace(0, extent, 25)
        c, r = fit_circle(centre + radius * np.exp(1j * t))
        assert abs(c - centre) < 1e-7 * max(radius, 1.0)
        assert r == pytest.approx(radius, rel=1e-7)


class TestCableDelay:
    def test_zero_delay(self):
        p = ResonatorParams.from_internal(4e5, 4e5, 0.0, f_r=6e9)
        sweep = noiseless(p)
        out, tau = remove_cable_delay(sweep)
        assert np.max(np.abs(out.s21 - sweep.s21)) < 1e-12
        assert abs(tau) < 1e-20

    def test_fifty_ns(self):
        p = ResonatorParams.from_internal(4e5, 4e5, 0.3, f_r=6e9, delay=50e-9)
        sweep = noiseless(p, n=10_000)
        _, tau = remove_cable_delay(sweep)
        assert tau == pytest.approx(50e-9, rel=1e-2)

    def test_idempotent(self):
        p = ResonatorParams.from_internal(4e5, 4e5, 0.3, f_r=6e9, delay=50e-9)
        out, _ = remove_cable_delay(noiseless(p, n=10_000))
        _, tau2 = remove_cable_delay(out)
        assert abs(tau2) < 1e-15

    def test_degenerate(self):
        f = np.linspace(6e9, 6.001e9, 50)
        with pytest.raises(FitError):
            remove_cable_delay(FrequencySweep(f, np.zeros(50, complex)))


class TestFitResonance:
    def test_noiseless_recovery(self, resonator):
        fit = fit_resonance(noiseless(resonator))
        assert fit.converged
        p = fit.params
        assert p.f_r == pytest.approx(resonator.f_r, rel=1e-12)
        for name in ("loaded_q", "coupling_q_mag"):
            assert getattr(p, name) == pytest.approx(getattr(resonator, name), rel=1e-8)
        assert p.phi == pytest.approx(resonator.phi, abs=1e-8)
        assert p.delay == pytest.approx(resonator.delay, rel=1e-8)
        assert abs(p.amplitude / resonator.amplitude - 1) < 1e-7
        assert fit.q_i == internal_q(p.loaded_q, p.coupling_q_mag, p.phi)

    def test_sigmas_nonnegative(self, resonator):
        fit = fit_resonance(synth_sweep(resonator, sweep_grid(resonator.f_r, resonator.loaded_q), 0.01, 1))
        assert fit.converged
        assert all(v >= 0 for v in fit.sigma68.values())
        assert fit.residual_rms >= 0
        # residual is set by the noise: sqrt(2) * 0.01 per complex point
        assert fit.residual_rms == pytest.approx(0.01 * np.sqrt(2), rel=0.15)

    def test_flat_trace_not_converged(self):
        f = np.linspace(5.999e9, 6.001e9, 201)
        rng = np.random.default_rng(0)
        z = 1.0 + 1e-3 * (rng.standard_normal(201) + 1j * rng.standard_normal(201))
        fit = fit_resonance(FrequencySweep(f, z))
        assert not fit.converged
        assert fit.params is None
        assert np.isnan(fit.q_i)

    def test_off_span_resonance_not_converged(self):
        p = ResonatorParams.from_internal(4e5, 4e5, 0.0, f_r=6e9)
        f = np.linspace(6e9 + 20 * p.linewidth, 6e9 + 30 * p.linewidth, 201)
        fit = fit_resonance(FrequencySweep(f, eval_s21(f, p)))
        assert not fit.converged

    def test_sigma_scales_with_noise(self, resonator):
        f = sweep_grid(resonator.f_r, resonator.loaded_q)
        a = fit_resonance(synth_sweep(resonator, f, 0.001, 5)).sigma68["q_i"]
        b = fit_resonance(synth_sweep(resonator, f, 0.004, 5)).sigma68["q_i"]
        assert b / a == pytest.approx(4.0, rel=0.1)

    def test_z68(self):
        assert Z68 == pytest.approx(0.9945, abs=1e-4)

    def test_to_dict(self, resonator):
        d = fit_resonance(noiseless(resonator)).to_dict()
        assert d["converged"] and "params" in d and d["sigma68"]["q_i"] >= 0

    @pytest.mark.slow
    def test_coupling_scatter_scales_with_noise(self):
        p = ResonatorParams.from_internal(5e5, 5e5, 0.0, f_r=6e9)
        f = sweep_grid(p.f_r, p.loaded_q)
        scatter = []
        for noise in (0.01, 0.02):
            qc = [fit_resonance(synth_sweep(p, f, noise, s)).params.coupling_q_mag for s in range(200)]
            scatter.append(np.std(qc))
        assert scatter[1] / scatter[0] == pytest.approx(2.0, rel=0.2)


class TestFitMany:
    def test_order_and_parallel_equivalence(self, resonator):
        f = sweep_grid(resonator.f_r, resonator.loaded_q)
        sweeps = [synth_sweep(resonator.replace(loaded_q=resonator.loaded_q * (1 + 0.01 * k)), f, 1e-3, k)
                  for k in range(6)]
        serial = fit_many(sweeps, 1)
        parallel = fit_many(sweeps, 2)
        assert [r.q_i for r in serial] == [r.q_i for r in parallel]
        assert np.all(np.diff([r.params.loaded_q for r in serial]) > 0)


class TestAverageTraces:
    def _sweeps(self, n, p, noise=1e-3):
        f = sweep_grid(p.f_r, p.loaded_q)
        return [synth_sweep(p, f, noise, k, SweepMetadata(timestamp_s=16.0 * k)) for k in range(n)]

    def test_identity(self, resonator):
        sweeps = self._sweeps(5, resonator)
        assert average_traces(sweeps, 1) == sweeps

    def test_copies_of_one_trace(self, resonator):
        s = self._sweeps(1, resonator)[0]
        out = average_traces([s] * 4, 4)
        assert len(out) == 1
        np.testing.assert_allclose(out[0].s21, s.s21, rtol=0, atol=1e-15)

    def test_counts_and_timestamps(self, resonator):
        sweeps = self._sweeps(91, resonator)
        out = average_traces(sweeps, 91)
        assert len(out) == 1
        assert out[0].metadata.timestamp_s == pytest.approx(16.0 * 45)
        assert 90 * 16.0 / 60 == pytest.approx(24.0)
        assert len(average_traces(sweeps, 10)) == 9

    def test_grid_mismatch(self, resonator):
        a = self._sweeps(1, resonator)[0]
        b = FrequencySweep(a.frequencies * 1.0000001, a.s21)
        with pytest.raises(ValidationError):
            average_traces([a, b], 2)

    def test_bad_k(self, resonator):
        with pytest.raises(ValidationError):
            average_traces(self._sweeps(2, resonator), 0)

    @pytest.mark.slow
    def test_scatter_reduced_by_sqrt_k(self):
        p = ResonatorParams.from_internal(5e5, 5e5, 0.0, f_r=6e9)
        sweeps = self._sweeps(800, p, noise=0.02)
        raw = np.std([r.q_i for r in fit_many(sweeps)])
        avg = np.std([r.q_i for r in fit_many(average_traces(sweeps, 4))])
        assert raw / avg == pytest.approx(2.0, rel=0.2)


class TestFrequencySweep:
    def test_non_monotonic_index(self):
        with pytest.raises(ValidationError, match="index 2"):
            FrequencySweep([1.0, 2.0, 1.5, 3.0], np.ones(4))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            FrequencySweep([1.0, 2.0, 3.0], np.ones(4))

    def test_too_short(self):
        with pytest.raises(ValidationError):
            FrequencySweep([1.0, 2.0], np.ones(2))
