import math

import numpy as np
import pytest

from crpslab.bounds import (
    BoundInputs,
    CoverageConfig,
    EstimationScenario,
    bound_aggregation_moment,
    bound_aggregation_regret,
    bound_aggregation_regret_expect,
    bound_estimation,
    bound_estimation_expect,
    bound_selection_moment,
    bound_selection_regret,
    bound_selection_regret_expect,
    coverage_experiment,
    rate_exponent_heavy_tail,
    synthetic_generator,
)
from crpslab.distributions import cdf
from crpslab.errors import ConfigError, InputError
from crpslab.rng import generator


class TestEstimationBound:
    def test_arithmetic(self):
        # c_beta = 128, log(2 * 10000 / 0.1) = log(200000)
        b = BoundInputs(n=10000, K=1, delta=0.1, beta1=1.0, beta2=1.0)
        got = bound_estimation(b)
        expect = math.sqrt(128.0 * math.log(200000.0) / 10000.0)
        assert got.value == pytest.approx(expect, rel=1e-12)
        assert got.value == pytest.approx(0.3952692, abs=1e-6)

    def test_decreasing_in_n(self):
        values = [
            bound_estimation(BoundInputs(n=n, K=3, delta=0.2, beta1=1.0, beta2=0.5)).value
            for n in (100, 1000, 10000, 100000)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_increasing_as_delta_shrinks(self):
        values = [
            bound_estimation(BoundInputs(n=500, K=2, delta=d, beta1=1.0, beta2=1.0)).value
            for d in (0.5, 0.1, 0.01, 0.001)
        ]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_zero_lipschitz_always_valid(self):
        b = BoundInputs(n=1, K=1, delta=0.5, beta1=1.0, beta2=1.0, L=0.0, R=0.0)
        assert bound_estimation(b).valid

    def test_validity_condition_fails_for_huge_radius(self):
        b = BoundInputs(n=10, K=1, delta=0.5, beta1=0.1, beta2=0.1, L=100.0, R=100.0)
        assert not bound_estimation(b).valid

    def test_delta_validated(self):
        with pytest.raises(InputError):
            bound_estimation(BoundInputs(n=10, K=1, delta=1.5, beta1=1.0, beta2=1.0))

    def test_expectation_form(self):
        b = BoundInputs(n=4000, K=4, beta1=1.0, beta2=2.0)
        got = bound_estimation_expect(b)
        expect = 2.0 * math.sqrt(64.0 * 5.0 * (math.log(2.0) + 4 * math.log(4000.0)) / 4000.0)
        assert got.value == pytest.approx(expect, rel=1e-12)


class TestSelectionBound:
    def test_arithmetic(self):
        b = BoundInputs(N=1000, M=2, delta=0.1, beta1=1.0, beta_n=1.0)
        got = bound_selection_regret(b)
        assert got.value == pytest.approx(4.0 * math.sqrt(2.0 * math.log(40.0) / 1000.0), rel=1e-12)
        assert got.value == pytest.approx(0.3436, abs=1e-4)
        assert got.valid

    def test_single_candidate_bound_positive(self):
        got = bound_selection_regret(BoundInputs(N=100, M=1, delta=0.1, beta1=1.0, beta_n=1.0))
        assert got.value > 0

    def test_quadrupling_n_halves_bound(self):
        b1 = bound_selection_regret(BoundInputs(N=500, M=3, delta=0.1, beta1=1.0, beta_n=2.0))
        b2 = bound_selection_regret(BoundInputs(N=2000, M=3, delta=0.1, beta1=1.0, beta_n=2.0))
        assert b2.value == pytest.approx(b1.value / 2.0, rel=1e-12)

    def test_expectation_form(self):
        b = BoundInputs(N=1000, M=4, beta1=1.0, beta_n=1.0)
        assert bound_selection_regret_expect(b).value == pytest.approx(
            8.0 * math.sqrt(2.0 * math.log(8.0) / 1000.0), rel=1e-12
        )


class TestAggregationBound:
    def test_arithmetic(self):
        b = BoundInputs(N=1000, M=2, delta=0.1, beta1=1.0, beta_n=1.0)
        got = bound_aggregation_regret(b)
        log_term = math.log(2.0 * 1000.0**2 / 0.1)
        assert got.value == pytest.approx(8.0 * math.sqrt(2.0 * log_term / 1000.0), rel=1e-12)
        assert got.valid  # N log(2 N^M / delta) = 16800 >= 48^2 / 2

    def test_validity_fails_for_tiny_cn(self):
        b = BoundInputs(N=10, M=1, delta=0.5, beta1=0.01, beta_n=0.01)
        assert not bound_aggregation_regret(b).valid

    def test_quadrupling_n_halves_bound_modulo_log(self):
        b1 = bound_aggregation_regret(BoundInputs(N=1000, M=2, delta=0.1, beta1=1.0, beta_n=1.0))
        b2 = bound_aggregation_regret(BoundInputs(N=4000, M=2, delta=0.1, beta1=1.0, beta_n=1.0))
        assert b2.value < b1.value / 1.8

    def test_expectation_form(self):
        b = BoundInputs(N=2000, M=3, beta1=1.0, beta_n=0.5)
        c_n = 1.25
        log_term = math.log(2.0) + 3 * math.log(2000.0)
        assert bound_aggregation_regret_expect(b).value == pytest.approx(
            2.0 * math.sqrt(c_n * log_term / 2000.0), rel=1e-12
        )


class TestRateExponents:
    def test_paper_value(self):
        assert rate_exponent_heavy_tail(2, 2) == 0.25

    def test_limit_is_parametric_rate(self):
        assert rate_exponent_heavy_tail(1e9, 3) == pytest.approx(0.5, abs=1e-7)

    def test_zero_dimension_edge(self):
        assert rate_exponent_heavy_tail(2, 0) == 0.5

    def test_monotone_in_p_and_K(self, rng):
        for _ in range(100):
            p = float(rng.uniform(2, 50))
            K = int(rng.integers(1, 20))
            assert rate_exponent_heavy_tail(p + 1.0, K) > rate_exponent_heavy_tail(p, K)
            assert rate_exponent_heavy_tail(p, K + 1) < rate_exponent_heavy_tail(p, K)
        # K = 0 degenerates to the constant parametric exponent
        assert rate_exponent_heavy_tail(5.0, 0) == rate_exponent_heavy_tail(17.0, 0) == 0.5

    def test_p_validated(self):
        with pytest.raises(InputError):
            rate_exponent_heavy_tail(1.5, 2)

    def test_moment_bound_calculators(self):
        sel = bound_selection_moment(BoundInputs(N=400, M=2, p=4.0, D=16.0, D_n=81.0))
        assert sel.value == pytest.approx(2.0 * (81.0 * 2) ** 0.25 / 20.0, rel=1e-12)
        agg = bound_aggregation_moment(BoundInputs(N=400, K=2, p=4.0, D=16.0, D_n=81.0, L=3.0))
        assert agg.value == pytest.approx((9.0 * 81.0) ** (1 / 6) * 400 ** (-1 / 3), rel=1e-12)


class TestSyntheticGenerator:
    def test_constant_preset_truth(self):
        gen = synthetic_generator({"kind": "constant", "c": 2.0, "sigma0": 0.5})
        t = gen.truth_at([0.3])
        assert t.m == 2.0 and t.sigma == 0.5

    def test_sample_mean_matches_population(self):
        gen = synthetic_generator("linear")
        X, Y = gen.sample_xy(40000, generator(0, "gen-mean"))
        m, _ = gen.location_scale(X)
        assert Y.mean() == pytest.approx(m.mean(), abs=0.03)

    def test_conditional_ks_distance(self):
        # empirical cdf of Y at a pinned x-slice vs the closed-form truth
        gen = synthetic_generator("sine")
        x = np.array([[0.37]])
        m, s = gen.location_scale(x)
        rng = generator(5, "gen-ks")
        draws = m[0] + s[0] * rng.standard_normal(10000)
        grid = np.linspace(draws.min(), draws.max(), 400)
        emp = np.searchsorted(np.sort(draws), grid, side="right") / draws.size
        truth = cdf(gen.truth_at(x[0]), grid)
        assert np.max(np.abs(emp - truth)) < 0.05

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError):
            synthetic_generator("cauchy")

    def test_beta1_is_conservative(self):
        # Y should concentrate within the claimed sub-Gaussian scale
        for preset in ("linear", "sine"):
            gen = synthetic_generator(preset)
            X, Y = gen.sample_xy(20000, generator(1, "gen-b1", preset))
            beta1 = gen.sub_gaussian_beta1()
            assert np.std(Y) <= beta1  # sub-Gaussian parameter dominates the sd


class TestEstimationScenarioConstants:
    def test_box_contains_truth(self):
        sc = EstimationScenario.default()
        gen = sc.generator
        theta_star = np.concatenate([[gen.a0], gen.a, [gen.b0], gen.b])
        assert sc.box.contains(theta_star)

    def test_lipschitz_constant_dominates_empirical_w1(self, rng):
        from crpslab.distributions import w1_distance
        from crpslab.models import EmosParams, emos_predict

        sc = EstimationScenario.default()
        consts = sc.constants()
        for _ in range(100):
            v1 = sc.box.sample_uniform(rng)
            v2 = sc.box.sample_uniform(rng)
            x = rng.uniform(0, 1, sc.generator.d)
            g1 = emos_predict(EmosParams.from_vector(v1, sc.generator.d, sc.box), x)
            g2 = emos_predict(EmosParams.from_vector(v2, sc.generator.d, sc.box), x)
            assert w1_distance(g1, g2) <= consts.L * np.linalg.norm(v1 - v2) + 1e-9

    def test_beta2_dominates_moment_range(self, rng):
        from crpslab.distributions import first_abs_moment
        from crpslab.models import EmosParams, emos_predict

        sc = EstimationScenario.default()
        consts = sc.constants()
        for _ in range(200):
            v = sc.box.sample_uniform(rng)
            x = rng.uniform(0, 1, sc.generator.d)
            m1 = first_abs_moment(emos_predict(EmosParams.from_vector(v, sc.generator.d, sc.box), x))
            assert m1 <= 2.0 * consts.beta2 + 1e-9


class TestEstimationStudy:
    def test_median_error_decreases_with_n(self):
        from crpslab.bounds import estimation_error_study

        errors, dists, oracle = estimation_error_study(n_grid=(250, 4000), reps=10, seed=2)
        assert np.median(errors[0]) > np.median(errors[1])
        assert np.median(dists[0]) > np.median(dists[1])
        assert oracle.converged

    def test_infeasible_grid_rejected(self):
        from crpslab.bounds import estimation_error_study

        with pytest.raises(ConfigError):
            estimation_error_study(n_grid=(2,), reps=2, seed=0)


class TestCoverageExperiment:
    def test_reps_floor_enforced(self):
        with pytest.raises(ConfigError):
            coverage_experiment(CoverageConfig(scenario="selection", reps=10))

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            coverage_experiment(CoverageConfig(scenario="other", reps=50))

    def test_selection_smoke(self):
        cfg = CoverageConfig(scenario="selection", reps=50, grid=(400,), seed=1, n_mc=1500)
        report = coverage_experiment(cfg)
        assert report.grid == (400,)
        assert len(report.values[0]) == 50
        assert report.coverage[0] >= 0.9  # loose bound, tiny regrets
        assert report.bound_valid[0]
        payload = report.to_dict()
        assert payload["scenario"] == "selection"
        assert len(payload["per_rep_values"][0]) == 50

    def test_degenerate_constant_truth_zero_regret(self):
        from crpslab.ensemble import CandidateSet, regret_selection
        from crpslab.models import KnnModel

        gen = synthetic_generator("constant")
        for rep in range(5):
            train = gen.sample_dataset(50, generator(rep, "degenerate"))
            val = gen.sample_dataset(50, generator(rep, "degenerate-val"))
            c = CandidateSet(("a", "b"), (KnnModel(2, train.X, train.Y), KnnModel(10, train.X, train.Y)))
            assert regret_selection(c, gen, val, n_mc=200, seed=rep) == 0.0
