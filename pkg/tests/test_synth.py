import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from tlsfluct.circlefit import sweep_grid
from tlsfluct.errors import ValidationError
from tlsfluct.model import eval_s21, loaded_q_from_internal, photon_number_from_q
from tlsfluct.spectral import lowest_decade_mean, series_coherence
from tlsfluct.synth import (
    FluctuationSpec,
    InterleavedSchedule,
    MeasurementModel,
    default_resonator,
    default_tls_model,
    gen_loss_tangent_process,
    gen_one_over_f_gaussian,
    simulate_interleaved_run,
    simulate_timetrace,
    synth_sweep,
)


def periodogram_slope(x, dt):
    f, p = signal.periodogram(x, fs=1 / dt)
    f, p = f[1:], p[1:]
    return np.polyfit(np.log(f), np.log(p), 1)[0]


class TestOneOverF:
    def test_white(self):
        x = gen_one_over_f_gaussian(2**16, 1.0, 0.0, 2.5, seed=1)
        assert x.var() == pytest.approx(2.5, rel=0.05)
        f, p = signal.welch(x, nperseg=1024)
        assert np.std(p[1:]) / np.mean(p[1:]) < 0.3
        assert abs(np.polyfit(np.log(f[1:]), np.log(p[1:]), 1)[0]) < 0.05

    def test_pink_slope(self):
        x = gen_one_over_f_gaussian(2**16, 1.0, 1.0, 1.0, seed=2)
        assert periodogram_slope(x, 1.0) == pytest.approx(-1.0, abs=0.1)

    @pytest.mark.parametrize("alpha", [0.5, 1.5, 2.0])
    def test_other_exponents(self, alpha):
        x = gen_one_over_f_gaussian(2**15, 0.5, alpha, 1.0, seed=3)
        assert periodogram_slope(x, 0.5) == pytest.approx(-alpha, abs=0.1)

    def test_determinism(self):
        a = gen_one_over_f_gaussian(1000, 1.0, 1.0, 1.0, seed=7)
        b = gen_one_over_f_gaussian(1000, 1.0, 1.0, 1.0, seed=7)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, gen_one_over_f_gaussian(1000, 1.0, 1.0, 1.0, seed=8))

    def test_zero_mean_exact_variance(self):
        x = gen_one_over_f_gaussian(500, 1.0, 1.0, 4.0, seed=0)
        assert abs(x.mean()) < 1e-12
        assert x.var() == pytest.approx(4.0, rel=1e-12)

    @pytest.mark.parametrize("kw", [dict(n=1), dict(dt=0.0), dict(alpha=-1.0)])
    def test_validation(self, kw):
        args = dict(n=100, dt=1.0, alpha=1.0)
        args.update(kw)
        with pytest.raises(ValidationError):
            gen_one_over_f_gaussian(**args)

    @pytest.mark.slow
    def test_stationary_halves(self):
        """Half-means agree across an ensemble: their spread matches between
        halves and the difference is centred on zero."""
        diffs = []
        for seed in range(200):
            x = gen_one_over_f_gaussian(2**14, 1.0, 1.0, 1.0, seed=seed)
            diffs.append(x[: 2**13].mean() - x[2**13:].mean())
        diffs = np.array(diffs)
        assert abs(diffs.mean()) < 3 * diffs.std(ddof=1) / np.sqrt(diffs.size)


class TestLossTangentProcess:
    def test_degenerate(self):
        x = gen_loss_tangent_process(FluctuationSpec(9e-7, 0.0, seed=1), 100, 1.0)
        assert np.all(x == 9e-7)

    def test_moments(self):
        spec = FluctuationSpec(9e-7, 2.2e-7, spectral_exponent=0.0, seed=4)
        x = gen_loss_tangent_process(spec, 10_000, 1.0)
        assert x.mean() == pytest.approx(9e-7, rel=0.05)
        assert x.std() == pytest.approx(2.2e-7, rel=0.05)

    def test_moment_matching_closed_form(self):
        spec = FluctuationSpec(9e-7, 2.2e-7)
        m, s = spec.log_params
        assert np.exp(m + s**2 / 2) == pytest.approx(9e-7, rel=1e-12)
        assert np.sqrt(np.expm1(s**2)) * np.exp(m + s**2 / 2) == pytest.approx(2.2e-7, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**63), st.floats(0.0, 2.0), st.floats(0.0, 5.0))
    def test_positive(self, seed, alpha, cv):
        spec = FluctuationSpec(1e-6, cv * 1e-6, spectral_exponent=alpha, seed=seed)
        assert np.all(gen_loss_tangent_process(spec, 256, 1.0) > 0)

    @pytest.mark.parametrize("kw", [dict(target_mean=0.0), dict(target_sd=-1.0),
                                    dict(hp_relative_sd=1.0), dict(freq_relative_sd=-0.1)])
    def test_spec_validation(self, kw):
        with pytest.raises(ValidationError):
            FluctuationSpec(**kw)


class TestSynthSweep:
    def test_noiseless_exact(self):
        p = default_resonator()
        f = sweep_grid(p.f_r, p.loaded_q)
        s = synth_sweep(p, f, 0.0)
        assert np.array_equal(s.s21, eval_s21(f, p))

    def test_noise_level(self):
        p = default_resonator()
        f = sweep_grid(p.f_r, p.loaded_q, n_points=10_000)
        s = synth_sweep(p, f, 1e-3, seed=5)
        rms = np.sqrt(np.mean(np.abs(s.s21 - eval_s21(f, p)) ** 2))
        assert rms == pytest.approx(1.414e-3, rel=0.05)

    def test_deterministic(self):
        p = default_resonator()
        f = sweep_grid(p.f_r, p.loaded_q)
        assert np.array_equal(synth_sweep(p, f, 1e-3, 9).s21, synth_sweep(p, f, 1e-3, 9).s21)

    def test_grid_validation(self):
        p = default_resonator()
        with pytest.raises(ValidationError):
            synth_sweep(p, [6e9, 6e9, 6.1e9], 0.0)
        with pytest.raises(ValidationError):
            synth_sweep(p, [6e9, 6.1e9], 0.0)
        with pytest.raises(ValidationError):
            synth_sweep(p, [6e9, 6.01e9, 6.02e9], -1.0)


class TestSchedule:
    def test_defaults(self):
        s = InterleavedSchedule()
        assert s.cycle_length == pytest.approx(60.5)
        assert s.n_cycles == int(16 * 3600 // 60.5)

    def test_timestamps_order(self):
        s = InterleavedSchedule(total_duration=3600)
        t = s.timestamps()
        merged = np.sort(np.concatenate(list(t.values())))
        assert np.all(np.diff(merged) > 0)
        assert np.all(t["LP"] < t["MP"]) and np.all(t["MP"] < t["HP"])
        assert np.allclose(np.diff(t["LP"]), s.cycle_length)

    @pytest.mark.parametrize("kw", [dict(idle_tau1=0.0), dict(point_durations=(1.0, -1.0, 1.0)),
                                    dict(total_duration=10.0), dict(power_points=(-75.0, -15.0))])
    def test_validation(self, kw):
        with pytest.raises(ValidationError):
            InterleavedSchedule(**kw)


class TestInterleavedRun:
    def test_zero_fluctuation(self):
        spec = FluctuationSpec(9e-7, 0.0, hp_relative_sd=0.0, seed=1)
        meas = MeasurementModel(fit_relative_sd={"LP": 0.0, "MP": 0.0, "HP": 0.0})
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), spec,
                                       InterleavedSchedule(total_duration=3600), meas)
        for s in run.series.values():
            assert np.ptp(s.q_i) <= 1e-9 * s.q_i.mean()

    def test_power_ordering(self):
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), FluctuationSpec(seed=2),
                                       InterleavedSchedule(total_duration=7200))
        assert run.lp.q_i.mean() < run.mp.q_i.mean() < run.hp.q_i.mean()
        n = {k: v.mean_photons.mean() for k, v in run.truth.items()}
        assert n["LP"] < n["MP"] < n["HP"]

    def test_deterministic(self):
        args = (default_tls_model(), default_resonator(), FluctuationSpec(seed=3),
                InterleavedSchedule(total_duration=3600))
        a, b = simulate_interleaved_run(*args), simulate_interleaved_run(*args)
        assert a.lp.q_i.tobytes() == b.lp.q_i.tobytes()

    def test_truth_consistency(self):
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), FluctuationSpec(seed=4),
                                       InterleavedSchedule(total_duration=3600))
        tr = run.truth["LP"]
        p = default_resonator()
        q = loaded_q_from_internal(tr.q_i, p.coupling_q_mag, p.phi)
        n = photon_number_from_q(-75.0, 90.0, q, p.coupling_q_mag, p.f_r)
        np.testing.assert_allclose(n, tr.mean_photons, rtol=1e-10)

    def test_coherence_hierarchy(self):
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), FluctuationSpec(seed=5))
        lp_mp = lowest_decade_mean(series_coherence(run.lp, run.mp))
        lp_hp = lowest_decade_mean(series_coherence(run.lp, run.hp))
        assert lp_mp > lp_hp

    def test_full_mode_short(self):
        meas = MeasurementModel(mode="full")
        run = simulate_interleaved_run(default_tls_model(), default_resonator(), FluctuationSpec(seed=6),
                                       InterleavedSchedule(total_duration=600), meas, keep_sweeps=True)
        assert run.lp.n_failed == 0
        assert len(run.sweeps["LP"]) == len(run.lp)
        rel = np.abs(run.lp.q_i / run.truth["LP"].q_i - 1)
        assert np.all(rel < 0.2)

    @pytest.mark.slow
    def test_frequency_scatter_follows_noise(self):
        """Without an f_r process the fitted f_r scatter scales with sweep noise."""
        m, p = default_tls_model(), default_resonator()
        scat = []
        for noise in (0.01, 0.02):
            meas = MeasurementModel(mode="full", sweep_noise_sd={"LP": noise})
            tr = simulate_timetrace(m, p, FluctuationSpec(seed=11), -75.0, 38.0, 4 * 3600, meas)
            scat.append(np.std(tr.series.f_r))
        assert scat[1] / scat[0] == pytest.approx(2.0, rel=0.25)

    def test_frequency_process(self):
        spec = FluctuationSpec(seed=3, freq_relative_sd=1e-7)
        tr = simulate_timetrace(default_tls_model(), default_resonator(), spec, -75.0, 38.0, 3600)
        assert np.std(tr.truth.f_r) > 0

    def test_measurement_validation(self):
        with pytest.raises(ValidationError):
            MeasurementModel(mode="slow")
        with pytest.raises(ValidationError):
            simulate_timetrace(default_tls_model(), default_resonator(), FluctuationSpec(), -75.0, 38.0, 40.0)
