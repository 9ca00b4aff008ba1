import math

import numpy as np
import pytest

from crpslab.distributions import crps_gaussian
from crpslab.drf import DrfHyper, drf_fit, drf_predict, drf_weights, drf_weights_matrix
from crpslab.errors import InputError
from crpslab.models import (
    DrnParams,
    EmosParams,
    KnnModel,
    ParamBox,
    drn_grad,
    drn_predict,
    emos_predict,
    inv_softplus,
    knn_predict,
    softplus,
    subgauss_proxy,
)
from crpslab.rng import generator


def wide_box(dim):
    return ParamBox.centered(np.zeros(dim), 50.0)


class TestParamBox:
    def test_project_and_contains(self):
        box = ParamBox([-1.0, 0.0], [1.0, 2.0])
        assert box.contains([0.5, 1.0])
        assert not box.contains([2.0, 1.0])
        assert box.project([2.0, -1.0]).tolist() == [1.0, 0.0]

    def test_circumradius(self):
        box = ParamBox([-1.0, -1.0], [1.0, 1.0])
        assert box.circumradius == pytest.approx(math.sqrt(2.0))

    def test_invalid_bounds(self):
        with pytest.raises(InputError):
            ParamBox([1.0], [0.0])


class TestEmos:
    def test_zero_params_give_log2_variance(self):
        p = EmosParams(0.0, [0.0], 0.0, [0.0], wide_box(4))
        g = emos_predict(p, [3.7])
        assert g.m == 0.0
        assert g.sigma == pytest.approx(math.sqrt(math.log(2.0)), abs=1e-12)

    def test_linear_location(self):
        p = EmosParams(1.0, [2.0], 0.0, [0.0], wide_box(4))
        assert emos_predict(p, [3.0]).m == pytest.approx(7.0)

    def test_softplus_saturation(self):
        p = EmosParams(0.0, [0.0], 10.0, [0.0], wide_box(4))
        assert emos_predict(p, [0.0]).sigma == pytest.approx(math.sqrt(10.0000454), abs=1e-6)

    def test_dimension_mismatch(self):
        p = EmosParams(0.0, [0.0], 0.0, [0.0], wide_box(4))
        with pytest.raises(InputError):
            emos_predict(p, [1.0, 2.0])

    def test_vector_round_trip(self):
        box = wide_box(6)
        p = EmosParams(0.5, [1.0, -1.0], 0.2, [0.3, 0.4], box)
        q = EmosParams.from_vector(p.to_vector(), 2, box)
        assert np.array_equal(p.to_vector(), q.to_vector())

    def test_out_of_box_rejected(self):
        box = ParamBox.centered(np.zeros(4), 1.0)
        with pytest.raises(InputError):
            EmosParams(5.0, [0.0], 0.0, [0.0], box)

    def test_scale_positivity_everywhere(self, rng):
        box = wide_box(4)
        for _ in range(200):
            p = EmosParams.from_vector(box.sample_uniform(rng), 1, box)
            assert emos_predict(p, [float(rng.uniform(-5, 5))]).sigma > 0


class TestDrn:
    def test_zero_slopes_match_emos(self):
        p = DrnParams(1.5, [0.0], 0.3, [0.0], [0.7], [[0.4]], "tanh", wide_box(6))
        e = EmosParams(1.5, [0.0], 0.3, [0.0], wide_box(4))
        for x in ([0.0], [5.0], [-2.0]):
            gd, ge = drn_predict(p, x), emos_predict(e, x)
            assert gd.m == ge.m and gd.sigma == ge.sigma

    def test_relu_single_unit(self):
        p = DrnParams(0.0, [1.0], 0.0, [0.0], [0.0], [[1.0]], "relu", wide_box(6))
        assert drn_predict(p, [2.0]).m == pytest.approx(2.0)
        assert drn_predict(p, [-2.0]).m == pytest.approx(0.0)

    def test_hidden_width_zero_is_constant_emos(self):
        p = DrnParams(2.0, [], 0.5, [], [], np.zeros((0, 3)), "relu", wide_box(2))
        e = EmosParams(2.0, [0.0, 0.0, 0.0], 0.5, [0.0, 0.0, 0.0], wide_box(8))
        for x in ([0.0, 1.0, 2.0], [-1.0, 3.0, 0.5]):
            gd, ge = drn_predict(p, x), emos_predict(e, x)
            assert gd.m == ge.m and gd.sigma == ge.sigma

    def test_forward_matches_hand_unrolled(self, rng):
        h_width, d = 3, 2
        dim = (d + 3) * h_width + 2
        vec = rng.normal(0, 1, dim)
        box = wide_box(dim)
        p = DrnParams.from_vector(vec, h_width, d, "tanh", box)
        x = rng.normal(0, 1, d)
        hidden = np.tanh(p.gamma + p.delta @ x)
        m = p.alpha + p.beta @ hidden
        var = float(softplus(p.alpha_s + p.beta_s @ hidden))
        g = drn_predict(p, x)
        assert g.m == pytest.approx(m, abs=1e-12)
        assert g.sigma == pytest.approx(math.sqrt(var), abs=1e-12)

    def test_dimension_invariant(self):
        p = DrnParams(0.0, [0.0, 0.0], 0.0, [0.0, 0.0], [0.0, 0.0], [[0.0], [0.0]], "relu", wide_box(10))
        assert p.dim == (1 + 3) * 2 + 2 == 10

    def test_gradient_vs_finite_differences(self, rng):
        h = 1e-5
        checked = 0
        while checked < 40:
            h_width, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
            dim = (d + 3) * h_width + 2
            box = wide_box(dim)
            vec = rng.normal(0, 1, dim)
            act = "relu" if checked % 2 else "tanh"
            p = DrnParams.from_vector(vec, h_width, d, act, box)
            x = rng.normal(0, 1, d)
            y = float(rng.normal(0, 2))
            pre = p.gamma + p.delta @ x
            if act == "relu" and np.any(np.abs(pre) < 1e-3):
                continue
            grad = drn_grad(p, x, y)
            for j in range(dim):
                vp, vm = vec.copy(), vec.copy()
                vp[j] += h
                vm[j] -= h
                fp = crps_gaussian(drn_predict(DrnParams.from_vector(vp, h_width, d, act, box), x), y)
                fm = crps_gaussian(drn_predict(DrnParams.from_vector(vm, h_width, d, act, box), x), y)
                fd = (fp - fm) / (2 * h)
                assert abs(grad[j] - fd) <= 1e-4 * max(1.0, abs(grad[j]), abs(fd))
            checked += 1

    def test_zero_slope_symmetric_gradient(self):
        p = DrnParams(1.0, [0.0], 0.0, [0.0], [0.5], [[0.3]], "tanh", wide_box(6))
        g = drn_grad(p, [0.2], 1.0)  # y equals the predicted mean
        assert g[0] == pytest.approx(0.0, abs=1e-12)


class TestKnn:
    def test_k_equals_n_gives_full_empirical(self, rng):
        X = rng.normal(size=(8, 2))
        Y = rng.normal(size=8)
        m = KnnModel(8, X, Y)
        d = knn_predict(m, [0.0, 0.0])
        assert np.array_equal(d.atoms, np.sort(Y))
        assert np.allclose(d.weights, 1 / 8)

    def test_k_one_at_training_point(self, rng):
        X = rng.normal(size=(6, 2))
        Y = rng.normal(size=6)
        m = KnnModel(1, X, Y)
        d = knn_predict(m, X[3])
        assert d.atoms.tolist() == [Y[3]]

    def test_two_nearest_fixture(self):
        X = np.array([[0.0], [0.3], [0.5], [0.9], [1.0]])
        Y = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
        m = KnnModel(2, X, Y)
        d = knn_predict(m, [0.4])
        assert set(d.atoms.tolist()) == {20.0, 30.0}
        assert np.allclose(d.weights, 0.5)

    def test_distance_tie_breaks_by_lowest_index(self):
        X = np.array([[1.0], [-1.0], [1.0]])
        Y = np.array([5.0, 6.0, 7.0])
        m = KnnModel(2, X, Y)
        d = knn_predict(m, [0.0])
        # all three are at distance 1; indices 0 and 1 win
        assert set(d.atoms.tolist()) == {5.0, 6.0}

    def test_k_bounds_validated(self, rng):
        X = rng.normal(size=(5, 1))
        with pytest.raises(InputError):
            KnnModel(6, X, rng.normal(size=5))

    def test_standardize_uses_per_feature_scale(self, rng):
        X = rng.uniform(size=(12, 2)) * np.array([1.0, 500.0])
        Y = rng.normal(size=12)
        scale = X.std(axis=0)
        flagged = KnnModel(3, X, Y, standardize=True)
        manual = KnnModel(3, X / scale, Y)
        assert np.allclose(flagged.scale, scale)
        for _ in range(10):
            q = rng.uniform(size=2) * np.array([1.0, 500.0])
            a = knn_predict(flagged, q)
            b = knn_predict(manual, q / scale)
            assert np.array_equal(a.atoms, b.atoms)


class TestDrf:
    def test_constant_response_is_dirac(self, rng):
        X = rng.uniform(size=(20, 3))
        m = drf_fit(X, np.full(20, 4.2), DrfHyper(num_trees=5, mtry=2), seed=0)
        d = drf_predict(m, rng.uniform(size=3))
        assert d.atoms.tolist() == [4.2]
        assert d.weights.tolist() == [1.0]

    def test_variance_optimal_split_threshold(self):
        X = np.array([[0.0], [0.1], [0.9], [1.0]])
        Y = np.array([0.0, 0.1, 5.0, 5.2])
        m = drf_fit(X, Y, DrfHyper(num_trees=1, mtry=1, sample_fraction=1.0), seed=5)
        # brute force over all gaps: the 0.1 | 0.9 gap maximizes variance reduction
        assert m.feature[0, 0] == 0
        assert m.thresh[0, 0] == pytest.approx(0.5)

    def test_same_seed_identical_forest(self, rng):
        X = rng.uniform(size=(40, 3))
        Y = rng.normal(size=40)
        a = drf_fit(X, Y, DrfHyper(num_trees=20, mtry=2), seed=9)
        b = drf_fit(X, Y, DrfHyper(num_trees=20, mtry=2), seed=9)
        for name in ("feature", "thresh", "left", "right", "leaf_lo", "leaf_hi", "members", "n_nodes"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        c = drf_fit(X, Y, DrfHyper(num_trees=20, mtry=2), seed=10)
        assert not np.array_equal(a.members, c.members)

    def test_weights_simplex(self, rng):
        X = rng.uniform(size=(50, 4))
        Y = rng.normal(size=50)
        m = drf_fit(X, Y, DrfHyper(num_trees=30, mtry=2), seed=1)
        W = drf_weights_matrix(m, rng.uniform(size=(20, 4)))
        assert np.all(W >= 0)
        assert np.allclose(W.sum(axis=1), 1.0, atol=1e-12)

    def test_single_tree_single_leaf_uniform_over_inbag(self, rng):
        # constant covariates leave no admissible split: one leaf, uniform weights
        X = np.ones((10, 2))
        Y = rng.normal(size=10)
        m = drf_fit(X, Y, DrfHyper(num_trees=1, mtry=1, sample_fraction=1.0, min_node_size=1), seed=2)
        w = drf_weights(m, rng.uniform(size=2))
        assert np.allclose(w, 0.1)

    def test_two_tree_hand_average(self):
        X = np.array([[0.0], [0.1], [0.9], [1.0]])
        Y = np.array([0.0, 0.1, 5.0, 5.2])
        m = drf_fit(X, Y, DrfHyper(num_trees=2, mtry=1, sample_fraction=1.0, min_node_size=2), seed=3)
        w = drf_weights(m, np.array([0.05]))
        # both trees split at 0.5 and put {0, 1} in the left leaf
        assert np.allclose(w, [0.5, 0.5, 0.0, 0.0])

    def test_min_node_size_invariant(self, rng):
        X = rng.uniform(size=(60, 3))
        Y = rng.normal(size=60)
        m = drf_fit(X, Y, DrfHyper(num_trees=10, mtry=2, min_node_size=5), seed=4)
        for b in range(10):
            for node in range(int(m.n_nodes[b])):
                if m.feature[b, node] < 0:
                    assert m.leaf_hi[b, node] - m.leaf_lo[b, node] >= 5

    def test_leaf_membership_consistent_with_traversal(self, rng):
        # every in-bag member of a leaf is routed to that leaf by traversal
        X = rng.uniform(size=(30, 2))
        Y = rng.normal(size=30)
        m = drf_fit(X, Y, DrfHyper(num_trees=5, mtry=1), seed=8)
        for b in range(5):
            for node in range(int(m.n_nodes[b])):
                if m.feature[b, node] >= 0:
                    continue
                for idx in m.members[b, m.leaf_lo[b, node] : m.leaf_hi[b, node]]:
                    cur = 0
                    while m.feature[b, cur] >= 0:
                        f = m.feature[b, cur]
                        cur = m.left[b, cur] if X[idx, f] <= m.thresh[b, cur] else m.right[b, cur]
                    assert cur == node

    def test_prediction_moment_bounded_by_max_abs_response(self, rng):
        from crpslab.distributions import first_abs_moment

        X = rng.uniform(size=(40, 2))
        Y = rng.normal(0, 3, size=40)
        m = drf_fit(X, Y, DrfHyper(num_trees=20, mtry=1), seed=0)
        cap = subgauss_proxy(Y)
        for _ in range(20):
            d = drf_predict(m, rng.uniform(size=2))
            assert first_abs_moment(d) <= cap + 1e-12

    def test_invalid_mtry(self, rng):
        X = rng.uniform(size=(20, 2))
        with pytest.raises(InputError):
            drf_fit(X, rng.normal(size=20), DrfHyper(num_trees=1, mtry=3), seed=0)


class TestSubgaussProxy:
    def test_examples(self):
        assert subgauss_proxy([-3.0, 1.0, 2.0]) == 3.0
        assert subgauss_proxy(np.zeros(5)) == 0.0
        with pytest.raises(InputError):
            subgauss_proxy([])

    def test_gaussian_sample_magnitude(self):
        # mean over seeds of max |Z_i|, n=1000, is near sqrt(2 log 1000)
        values = []
        for s in range(200):
            z = generator(s, "proxy-mc").standard_normal(1000)
            values.append(subgauss_proxy(z))
        assert abs(np.mean(values) - math.sqrt(2 * math.log(1000.0))) < 0.5


def test_inv_softplus_round_trip(rng):
    v = rng.uniform(0.05, 40.0, 100)
    assert np.allclose(softplus(inv_softplus(v)), v, rtol=1e-10, atol=1e-12)
