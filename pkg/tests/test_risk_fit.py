import math

import numpy as np
import pytest

from crpslab.bounds import synthetic_generator
from crpslab.data import Dataset
from crpslab.distributions import GaussianLS, crps_gaussian, point_mass
from crpslab.errors import InputError
from crpslab.models import EmosParams, KnnModel, ParamBox, softplus
from crpslab.optim import OptimizerConfig
from crpslab.risk import (
    ConstantPredictor,
    empirical_risk,
    excess_risk_exact,
    fit_drn,
    fit_emos,
    theoretical_risk_mc,
)
from crpslab.rng import generator

CRPS_STD_NORMAL_AT_0 = math.sqrt(2 / math.pi) - 1 / math.sqrt(math.pi)


class TestEmpiricalRisk:
    def test_perfect_point_predictions_give_zero(self):
        X = np.arange(5, dtype=float).reshape(-1, 1)
        Y = np.array([2.0, 2.0, 2.0, 2.0, 2.0])
        model = ConstantPredictor(point_mass(2.0))
        assert empirical_risk(model, Dataset(X, Y)).value == 0.0

    def test_single_gaussian_point(self):
        ds = Dataset(np.zeros((1, 1)), np.zeros(1))
        model = ConstantPredictor(GaussianLS(0.0, 1.0))
        assert empirical_risk(model, ds).value == pytest.approx(CRPS_STD_NORMAL_AT_0, abs=1e-12)

    def test_mean_linearity(self, rng):
        ds = Dataset(rng.normal(size=(2, 1)), rng.normal(size=2))
        model = ConstantPredictor(GaussianLS(0.3, 1.2))
        scores = [crps_gaussian(GaussianLS(0.3, 1.2), y) for y in ds.Y]
        assert empirical_risk(model, ds).value == pytest.approx(np.mean(scores), abs=1e-14)

    def test_knn_batch_matches_pointwise(self, rng, sine_train, sine_val):
        from crpslab.distributions import crps_empirical
        from crpslab.models import knn_predict

        model = KnnModel(5, sine_train.X, sine_train.Y)
        est = empirical_risk(model, sine_val)
        direct = np.mean([crps_empirical(knn_predict(model, x), y) for x, y in zip(sine_val.X, sine_val.Y)])
        assert est.value == pytest.approx(direct, abs=1e-12)

    def test_drf_batch_matches_pointwise(self, rng, sine_train, sine_val):
        from crpslab.distributions import crps_empirical
        from crpslab.drf import DrfHyper, drf_fit, drf_predict

        model = drf_fit(sine_train.X, sine_train.Y, DrfHyper(num_trees=25, mtry=1), seed=3)
        est = empirical_risk(model, sine_val)
        direct = np.mean([crps_empirical(drf_predict(model, x), y) for x, y in zip(sine_val.X, sine_val.Y)])
        assert est.value == pytest.approx(direct, abs=1e-12)


class TestFitEmos:
    def test_homoscedastic_recovery(self):
        rng = generator(7, "homoscedastic")
        X = rng.uniform(0, 1, (2000, 1))
        Y = 2.0 + 3.0 * X[:, 0] + rng.standard_normal(2000)
        fit = fit_emos(Dataset(X, Y), seed=0)
        vec = fit.params.to_vector()
        assert abs(vec[0] - 2.0) < 0.15
        assert abs(vec[1] - 3.0) < 0.15
        sigma = np.sqrt(softplus(vec[2] + vec[3] * np.array([0.0, 0.5, 1.0])))
        assert np.all(np.abs(sigma - 1.0) < 0.15)

    def test_constant_noiseless_data(self):
        X = np.linspace(0, 1, 60).reshape(-1, 1)
        Y = np.full(60, 3.0)
        fit = fit_emos(Dataset(X, Y), seed=0)
        assert fit.risk < 5e-3
        g_mid = fit.params.to_vector()
        assert abs(g_mid[0] + g_mid[1] * 0.5 - 3.0) < 0.05

    def test_collapsed_box_returns_that_point(self, tiny_dataset):
        theta = np.array([1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0])[: 2 * (1 + tiny_dataset.d)]
        box = ParamBox(theta, theta)
        fit = fit_emos(tiny_dataset, box=box, seed=0)
        assert np.array_equal(fit.params.to_vector(), theta)
        assert fit.converged

    def test_trace_nonincreasing_and_final_in_box(self, tiny_dataset):
        fit = fit_emos(tiny_dataset, seed=1)
        trace = np.array(fit.trace)
        assert np.all(np.diff(trace) <= 0)
        assert fit.params.box.contains(fit.params.to_vector())
        assert fit.risk == trace[-1]

    def test_needs_enough_points(self):
        ds = Dataset(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(InputError):
            fit_emos(ds, seed=0)


class TestFitDrn:
    def test_sine_beats_emos(self):
        gen = synthetic_generator("sine")
        train = gen.sample_dataset(800, generator(3, "drn-train"))
        emos = fit_emos(train, seed=0)
        drn = fit_drn(train, hidden=8, seed=0)
        emos_excess = excess_risk_exact(emos.params, gen, x_mc=2048, seed=5)
        drn_excess = excess_risk_exact(drn.params, gen, x_mc=2048, seed=5)
        assert drn_excess < emos_excess

    def test_zero_hidden_matches_emos_on_constant_data(self):
        rng = generator(9, "const")
        X = rng.uniform(0, 1, (120, 1))
        Y = 1.5 + 0.3 * rng.standard_normal(120)
        ds = Dataset(X, Y)
        drn = fit_drn(ds, hidden=0, seed=0)
        box = ParamBox.centered(np.array([Y.mean(), 0.0, 0.0, 0.0]), 50.0)
        emos = fit_emos(ds, box=box, seed=0)
        assert drn.risk == pytest.approx(emos.risk, abs=5e-3)

    def test_constant_data_risk_vanishes(self):
        X = np.linspace(0, 1, 80).reshape(-1, 1)
        ds = Dataset(X, np.full(80, -1.0))
        fit = fit_drn(ds, hidden=1, seed=0)
        assert fit.risk < 5e-3

    def test_gd_path_respects_box(self):
        gen = synthetic_generator("sine")
        train = gen.sample_dataset(300, generator(4, "drn-box"))
        fit = fit_drn(train, hidden=4, seed=0, opt=OptimizerConfig(epochs=30))
        assert fit.params.box.contains(fit.params.to_vector())
        assert np.all(np.diff(np.array(fit.trace)) <= 0)


class TestTheoreticalRisk:
    def test_matched_gaussian_value(self):
        gen = synthetic_generator({"kind": "constant", "c": 0.0, "sigma0": 1.0})
        model = ConstantPredictor(GaussianLS(0.0, 1.0))
        est = theoretical_risk_mc(model, gen, n_mc=40000, seed=0)
        # E[S(N01, Y)] for Y ~ N01 equals 1/sqrt(pi)
        assert est.value == pytest.approx(1 / math.sqrt(math.pi), abs=4 * est.stderr)

    def test_stderr_scales_with_sqrt_n(self):
        gen = synthetic_generator("sine")
        model = ConstantPredictor(GaussianLS(0.0, 1.0))
        a = theoretical_risk_mc(model, gen, n_mc=2000, seed=1)
        b = theoretical_risk_mc(model, gen, n_mc=8000, seed=2)
        assert b.stderr == pytest.approx(a.stderr / 2.0, rel=0.2)

    def test_degenerate_truth_and_model(self):
        gen = synthetic_generator({"kind": "constant", "c": 0.0, "sigma0": 0.0})
        model = ConstantPredictor(point_mass(0.0))
        assert theoretical_risk_mc(model, gen, n_mc=100, seed=0).value == 0.0

    def test_n_mc_validated(self):
        gen = synthetic_generator("sine")
        with pytest.raises(InputError):
            theoretical_risk_mc(ConstantPredictor(point_mass(0.0)), gen, n_mc=1, seed=0)


class TestExcessRisk:
    def test_model_equals_truth(self):
        gen = synthetic_generator("linear")
        box = ParamBox.centered(np.array([gen.a0, gen.a[0], gen.b0, gen.b[0]]), 1.0)
        truth_params = EmosParams(gen.a0, list(gen.a), gen.b0, list(gen.b), box)
        assert excess_risk_exact(truth_params, gen, x_mc=512, seed=0) < 1e-12

    def test_unit_gap_point_masses(self):
        gen = synthetic_generator({"kind": "constant", "c": 1.0, "sigma0": 0.0})
        model = ConstantPredictor(point_mass(0.0))
        assert excess_risk_exact(model, gen, x_mc=64, seed=0) == pytest.approx(1.0, abs=1e-12)

    def test_decreasing_in_sample_size(self):
        gen = synthetic_generator("linear")
        values = []
        for n in (250, 1000, 4000):
            ds = gen.sample_dataset(n, generator(0, "excess-n", n))
            fit = fit_emos(ds, seed=0)
            values.append(excess_risk_exact(fit.params, gen, x_mc=4096, seed=9))
        assert values[0] > values[1] > values[2]

    def test_excess_identity_vs_mc(self):
        # Sbar(F, G) - Sbar(G, G) matches the divergence within 3 MC stderr
        gen = synthetic_generator({"kind": "constant", "c": 0.3, "sigma0": 0.8})
        model = ConstantPredictor(GaussianLS(-0.2, 1.1))
        mc_model = theoretical_risk_mc(model, gen, n_mc=60000, seed=3)
        mc_truth = theoretical_risk_mc(ConstantPredictor(GaussianLS(0.3, 0.8)), gen, n_mc=60000, seed=3)
        gap = mc_model.value - mc_truth.value
        exact = excess_risk_exact(model, gen, x_mc=16, seed=0)
        spread = 3.0 * math.hypot(mc_model.stderr, mc_truth.stderr)
        assert abs(gap - exact) <= spread
