import dataclasses

import numpy as np
import pytest

from modefilter import models, presets, sim
from modefilter.errors import InvalidModel


def single_mode_system(A=None, q=0.0, r=1e-4, n=2):
    A = np.eye(n) if A is None else np.asarray(A, dtype=float)
    mod = models.DiscreteModeModel(
        A=A, B=np.zeros((n, 1)), G=np.zeros((n, 0)), C=np.eye(n),
        D=np.zeros((n, 1)), H=np.zeros((n, 0)), Q=np.eye(n) * q,
        R=np.eye(n) * r)
    return models.SwitchedSystem(modes=(mod,))


def plain_scenario(system, horizon=20, seed=0, **kw):
    n = system.n
    d = tuple(tuple(sim.Waveform() for _ in range(mod.p))
              for mod in system.modes)
    defaults = dict(system=system, dt=0.1, horizon=horizon,
                    x0=np.zeros(n), P0=np.eye(n),
                    schedule=sim.ExplicitSchedule(((0, 0),)),
                    u=(sim.Waveform(),), d=d, seed=seed)
    defaults.update(kw)
    return sim.Scenario(**defaults)


class TestWaveform:
    def test_constant(self):
        assert sim.Waveform(constant=2.5)(17.0) == 2.5

    def test_ramp(self):
        assert sim.Waveform(ramp_rate=3.0)(2.0) == 6.0

    def test_sin(self):
        w = sim.Waveform(sin_amplitude=2.0, sin_period=4.0)
        assert w(1.0) == pytest.approx(2.0)
        assert w(2.0) == pytest.approx(0.0, abs=1e-12)

    def test_phase(self):
        w = sim.Waveform(sin_amplitude=1.0, sin_period=1.0,
                         sin_phase=np.pi / 2.0)
        assert w(0.0) == pytest.approx(1.0)

    def test_combined(self):
        w = sim.Waveform(constant=1.0, ramp_rate=0.5, sin_amplitude=1.0,
                         sin_period=2.0)
        assert w(0.5) == pytest.approx(1.0 + 0.25 + 1.0)


class TestSchedules:
    def test_mode_lookup(self):
        sched = sim.ExplicitSchedule(((0, 0), (300, 1), (600, 0)))
        assert sched.mode_at(0) == 0
        assert sched.mode_at(299) == 0
        assert sched.mode_at(300) == 1
        assert sched.mode_at(599) == 1
        assert sched.mode_at(600) == 0
        assert sched.switch_steps() == (300, 600)

    def test_must_start_at_zero(self):
        with pytest.raises(InvalidModel):
            sim.ExplicitSchedule(((5, 0),))

    def test_strictly_increasing(self):
        with pytest.raises(InvalidModel):
            sim.ExplicitSchedule(((0, 0), (10, 1), (10, 2)))

    def test_markov_validation(self):
        sched = sim.MarkovSchedule(P=[[0.5, 0.5], [0.5, 0.5]], q0=1)
        assert sched.q0 == 1
        with pytest.raises(InvalidModel):
            sim.MarkovSchedule(P=[[0.5, 0.6], [0.5, 0.5]])
        with pytest.raises(InvalidModel):
            sim.MarkovSchedule(P=[[0.5, 0.5], [0.5, 0.5]], q0=2)


class TestScenarioValidation:
    def test_bad_horizon(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(), horizon=0)

    def test_bad_x0_length(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(), x0=np.zeros(3))

    def test_wrong_known_input_count(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(), u=())

    def test_wrong_unknown_input_count(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(), d=((sim.Waveform(),),))

    def test_schedule_mode_out_of_range(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(),
                           schedule=sim.ExplicitSchedule(((0, 0), (5, 1))))

    def test_markov_size_mismatch(self):
        with pytest.raises(InvalidModel):
            plain_scenario(single_mode_system(),
                           schedule=sim.MarkovSchedule(P=np.eye(2)))


class TestSimulate:
    def test_frozen_state_without_noise_or_input(self):
        sc = plain_scenario(single_mode_system(q=0.0), horizon=30,
                            x0=[1.5, -2.0])
        truth = sim.simulate(sc)
        np.testing.assert_array_equal(truth.x,
                                      np.tile([1.5, -2.0], (31, 1)))
        np.testing.assert_array_equal(truth.w, 0.0)

    def test_linear_relations_hold_exactly(self):
        sc = presets.intersection_scenario("I-M-I", horizon=120, seed=5)
        truth = sim.simulate(sc)
        sys_ = sc.system
        for k in range(sc.horizon + 1):
            mod = sys_.modes[truth.q[k]]
            dk = sc.d_at(int(truth.q[k]), k)
            y_ref = mod.C @ truth.x[k] + mod.D @ truth.u[k] \
                + mod.H @ dk + truth.v[k]
            np.testing.assert_array_equal(truth.y[k], y_ref)
            if k < sc.horizon:
                x_ref = mod.A @ truth.x[k] + mod.B @ truth.u[k] \
                    + mod.G @ dk + truth.w[k]
                np.testing.assert_array_equal(truth.x[k + 1], x_ref)

    def test_same_seed_bit_identical(self):
        sc = presets.intersection_scenario("markov", horizon=80, seed=11)
        a, b = sim.simulate(sc), sim.simulate(sc)
        for name in ("x", "q", "d", "u", "y", "w", "v"):
            np.testing.assert_array_equal(getattr(a, name),
                                          getattr(b, name))

    def test_different_seed_differs(self):
        sc1 = presets.intersection_scenario("stay-I", horizon=40, seed=1)
        sc2 = presets.intersection_scenario("stay-I", horizon=40, seed=2)
        assert not np.array_equal(sim.simulate(sc1).y, sim.simulate(sc2).y)

    def test_explicit_switch_pattern(self):
        sc = presets.intersection_scenario("I-M-I", horizon=700,
                                           switch_steps=(300, 600))
        truth = sim.simulate(sc)
        assert truth.q[0] == 0 and truth.q[299] == 0
        assert truth.q[300] == 1 and truth.q[599] == 1
        assert truth.q[600] == 0 and truth.q[700] == 0

    def test_stay_variants_never_switch(self):
        for variant, mode in (("stay-I", 0), ("stay-M", 1), ("stay-C", 2)):
            sc = presets.intersection_scenario(variant, horizon=50)
            truth = sim.simulate(sc)
            assert np.all(truth.q == mode)

    def test_markov_variant_switches_and_stays_in_range(self):
        sc = presets.intersection_scenario("markov", horizon=400, seed=7)
        truth = sim.simulate(sc)
        assert truth.q.min() >= 0 and truth.q.max() <= 2
        assert np.any(np.diff(truth.q) != 0)

    def test_sampled_initial_state(self):
        sc = presets.intersection_scenario("stay-I", horizon=5, seed=3,
                                           sample_x0=True)
        truth = sim.simulate(sc)
        assert not np.array_equal(truth.x[0], sc.x0)
        sc0 = presets.intersection_scenario("stay-I", horizon=5, seed=3)
        assert np.array_equal(sim.simulate(sc0).x[0], sc0.x0)

    def test_applied_input_is_mode_specific(self):
        sc = presets.intersection_scenario("I-M-I", horizon=700, seed=0)
        truth = sim.simulate(sc)
        t = 100 * sc.dt
        # Mode I applies the acceleration wave on channel 0; mode M does not.
        assert truth.d[100, 0] == pytest.approx(sc.d[0][0](t))
        assert sc.d[0][0](t) != 0.0
        assert truth.d[400, 0] == 0.0
        # The bias ramp runs in every mode.
        assert truth.d[400, 1] == pytest.approx(3.0 * 400 * sc.dt)


class TestPresetScenario:
    def test_transition_row(self):
        P = presets.intersection_transition()
        np.testing.assert_allclose(P[0], [0.7, 0.15, 0.15])
        np.testing.assert_allclose(P.sum(axis=1), np.ones(3), atol=1e-12)

    def test_discrete_process_noise_scale(self):
        mod = presets.intersection_system(dt=0.01).modes[0]
        assert mod.Q[1, 1] == pytest.approx(1.6e-6, rel=2e-3)
        assert mod.R[0, 0] == pytest.approx(1e-2, rel=1e-12)

    def test_default_waveforms(self):
        sc = presets.intersection_scenario("stay-I")
        assert sc.d[0][1].ramp_rate == 3.0
        assert sc.d[1][1].ramp_rate == 3.0
        assert sc.d[0][0].constant != 0.0  # acceleration wave, mode I only
        assert sc.d[1][0].constant == 0.0
        assert sc.name == "intersection:stay-I"

    def test_unknown_variant(self):
        with pytest.raises(InvalidModel):
            presets.intersection_scenario("stay-X")


class TestRunEstimatorTraces:
    def _small_run(self, kind="static", horizon=40, seed=4):
        sc = presets.intersection_scenario("stay-I", horizon=horizon,
                                           seed=seed)
        truth = sim.simulate(sc)
        if kind == "dynamic":
            cfg = sim.EstimatorConfig(
                kind="dynamic", transition=presets.intersection_transition())
        else:
            cfg = sim.EstimatorConfig(kind="static")
        return sc, truth, sim.run_estimator(truth, sc, cfg)

    def test_row_zero_conventions(self):
        _, _, tr = self._small_run()
        np.testing.assert_allclose(tr.mu[0], np.full(3, 1 / 3))
        assert np.all(np.isnan(tr.d_hat[0]))
        assert np.all(np.isnan(tr.nu[0]))
        assert tr.reinit_mask[0] == 0

    def test_column_widths(self):
        _, _, tr = self._small_run()
        assert tr.nu.shape[1] == 3   # l - p_H
        assert tr.S_flat.shape[1] == 9
        assert tr.d_hat.shape[1] == 2
        names = tr.column_names()
        assert names[0] == "k"
        assert names[-1] == "reinit_mask"
        assert "mu_0" in names and "x_hat_3" in names

    def test_probabilities_on_simplex_every_step(self):
        _, _, tr = self._small_run(kind="dynamic", horizon=60)
        np.testing.assert_allclose(tr.mu.sum(axis=1), 1.0, atol=1e-12)
        assert tr.mu.min() >= 0.0

    def test_estimator_only_sees_measurements(self):
        # Re-running with a truth whose x/q were zeroed out must give the
        # same estimates: the estimator reads only y and u.
        sc, truth, tr = self._small_run()
        blind = dataclasses.replace(truth, x=np.zeros_like(truth.x),
                                    q=np.zeros_like(truth.q))
        tr2 = sim.run_estimator(blind, sc, sim.EstimatorConfig(kind="static"))
        np.testing.assert_array_equal(tr.x_hat, tr2.x_hat)
        np.testing.assert_array_equal(tr.mu, tr2.mu)

    def test_determinism(self):
        _, _, a = self._small_run(kind="dynamic")
        _, _, b = self._small_run(kind="dynamic")
        assert sim.traces_equal(a, b)

    def test_no_input_system_has_empty_input_columns(self, rng):
        sc = plain_scenario(single_mode_system(q=0.01), horizon=15)
        truth = sim.simulate(sc)
        tr = sim.run_estimator(truth, sc, sim.EstimatorConfig(kind="static"))
        assert tr.d_hat.shape == (16, 0)
        assert np.all(tr.mu == 1.0)
        assert np.all(tr.q_map == 0)

    def test_csv_round_trip(self, tmp_path):
        _, _, tr = self._small_run(kind="dynamic")
        path = tmp_path / "traces.csv"
        tr.to_csv(path)
        back = sim.Traces.from_csv(path)
        assert sim.traces_equal(tr, back)

    def test_csv_text_matches_file(self, tmp_path):
        _, _, tr = self._small_run()
        path = tmp_path / "traces.csv"
        tr.to_csv(path)
        assert path.read_text() == tr.to_csv_text()

    def test_csv_full_precision(self, tmp_path):
        _, _, tr = self._small_run()
        path = tmp_path / "traces.csv"
        tr.to_csv(path)
        header, first = path.read_text().splitlines()[:2]
        cols = dict(zip(header.split(","), first.split(",")))
        assert cols["x_true_0"] == "%.17g" % tr.x_true[0, 0]
        assert cols["k"] == "0"

    def test_static_run_regression(self):
        _, _, tr = self._small_run(kind="static", horizon=60, seed=0)
        np.testing.assert_allclose(
            tr.mu[-1], [0.9984327636357286, 0.001467236364271317, 1e-4],
            rtol=1e-9)
        np.testing.assert_allclose(
            tr.x_hat[-1],
            [-24.07786561966638, 9.843283957310854,
             -21.480873951025966, 5.680786468706719], rtol=1e-11)
        np.testing.assert_allclose(
            tr.d_hat[-1], [4.082047354543362, 1.9705293814536637],
            rtol=1e-10)

    def test_dynamic_run_regression(self):
        _, _, tr = self._small_run(kind="dynamic", horizon=60, seed=0)
        np.testing.assert_allclose(
            tr.mu[-1],
            [0.9918895241098633, 0.004258420175712299,
             0.0038520557144242984], rtol=1e-9)
        np.testing.assert_allclose(
            tr.x_hat[-1],
            [-24.054826768058646, 9.838261868512179,
             -21.457492299331125, 5.675782814061179], rtol=1e-11)


class TestMetrics:
    def _switched_run(self):
        mod_a = models.DiscreteModeModel(
            A=[[0.9]], B=np.zeros((1, 1)), G=np.zeros((1, 0)), C=[[1.0]],
            D=np.zeros((1, 1)), H=np.zeros((1, 0)), Q=[[0.1]], R=[[0.1]])
        mod_b = dataclasses.replace(mod_a, A=np.array([[0.2]]))
        system = models.SwitchedSystem(modes=(mod_a, mod_b))
        sc = plain_scenario(system, horizon=30, seed=9,
                            schedule=sim.ExplicitSchedule(((0, 0), (10, 1))),
                            d=((), ()))
        truth = sim.simulate(sc)
        tr = sim.run_estimator(truth, sc, sim.EstimatorConfig(kind="static"))
        return tr

    def test_switch_bookkeeping(self):
        tr = self._switched_run()
        out = sim.metrics(tr, transient_window=5)
        assert out["true_switch_steps"] == [10]
        assert out["transient_window"] == 5
        assert out["horizon"] == 30
        assert 0.0 <= out["mode_accuracy"] <= 1.0
        assert 0.0 <= out["mu_true_final"] <= 1.0

    def test_perfect_state_estimate_scores_zero(self):
        tr = self._switched_run()
        tr.x_hat = tr.x_true.copy()
        out = sim.metrics(tr)
        np.testing.assert_allclose(out["state_rmse"], 0.0)

    def test_constant_offset_recovered(self):
        tr = self._switched_run()
        tr.x_hat = tr.x_true + 0.75
        out = sim.metrics(tr)
        np.testing.assert_allclose(out["state_rmse"], 0.75, rtol=1e-12)

    def test_input_alignment_is_one_step_delayed(self):
        sc = presets.intersection_scenario("stay-I", horizon=25, seed=2)
        truth = sim.simulate(sc)
        tr = sim.run_estimator(truth, sc, sim.EstimatorConfig(kind="static"))
        tr.d_hat = np.vstack([np.full((1, 2), np.nan), truth.d[:-1]])
        out = sim.metrics(tr)
        np.testing.assert_allclose(out["input_rmse"], 0.0, atol=1e-14)

    def test_whiteness_requires_enough_rows(self):
        sc = presets.intersection_scenario("stay-I", horizon=15, seed=2)
        truth = sim.simulate(sc)
        tr = sim.run_estimator(truth, sc, sim.EstimatorConfig(kind="static"))
        assert "whiteness" not in sim.metrics(tr)
        _, _, tr2 = TestRunEstimatorTraces()._small_run(horizon=60)
        out = sim.metrics(tr2)
        assert out["whiteness"]["bound"] == pytest.approx(3.0 / np.sqrt(60))


class TestWhitenessStats:
    def test_iid_sequence_passes(self):
        rng = np.random.default_rng(77)
        nu = rng.standard_normal((5000, 2)) @ np.diag([1.0, 2.0])
        S = np.diag([1.0, 4.0])
        ws = sim.whiteness_stats(nu, S)
        assert max(ws["max_abs_autocorr"]) < ws["bound"]
        np.testing.assert_allclose(ws["normalized_cov"], np.eye(2),
                                   atol=0.06)

    def test_correlated_sequence_fails(self):
        rng = np.random.default_rng(78)
        e = np.zeros((5000, 1))
        for k in range(1, 5000):
            e[k] = 0.9 * e[k - 1] + rng.standard_normal(1)
        ws = sim.whiteness_stats(e, np.eye(1))
        assert ws["max_abs_autocorr"][0] > ws["bound"]

    def test_per_sample_covariances(self):
        rng = np.random.default_rng(79)
        scales = 1.0 + rng.random(2000)
        nu = rng.standard_normal(2000) * np.sqrt(scales)
        S = scales.reshape(-1, 1, 1)
        ws = sim.whiteness_stats(nu.reshape(-1, 1), S)
        assert ws["normalized_cov"][0, 0] == pytest.approx(1.0, abs=0.1)
