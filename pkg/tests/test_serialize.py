import json

import numpy as np
import pytest

from crpslab.distributions import GaussianLS, MixtureSpec, WeightedEmpirical, crps
from crpslab.drf import DrfHyper, drf_fit, drf_weights
from crpslab.errors import InputError
from crpslab.models import DrnParams, EmosParams, KnnModel, ParamBox
from crpslab.serialize import dist_from_dict, dist_to_dict, model_from_dict, model_to_dict


def roundtrip_dist(d):
    return dist_from_dict(json.loads(json.dumps(dist_to_dict(d))))


class TestDistSchema:
    def test_empirical(self):
        d = WeightedEmpirical([1.0, 2.0], [0.25, 0.75])
        r = roundtrip_dist(d)
        assert np.array_equal(r.atoms, d.atoms) and np.array_equal(r.weights, d.weights)

    def test_gaussian(self):
        r = roundtrip_dist(GaussianLS(0.5, 2.0))
        assert r.m == 0.5 and r.sigma == 2.0

    def test_mixture_nested(self):
        mix = MixtureSpec(
            (GaussianLS(0.0, 1.0), WeightedEmpirical([0.0], [1.0])), np.array([0.4, 0.6])
        )
        r = roundtrip_dist(mix)
        assert crps(r, 0.3) == pytest.approx(crps(mix, 0.3), abs=1e-12)

    def test_unknown_type(self):
        with pytest.raises(InputError):
            dist_from_dict({"type": "poisson"})


class TestModelSchema:
    def test_emos_round_trip(self):
        box = ParamBox.centered(np.zeros(4), 10.0)
        p = EmosParams(0.3, [1.2], -0.5, [0.7], box)
        q = model_from_dict(json.loads(json.dumps(model_to_dict(p))))
        assert np.array_equal(p.to_vector(), q.to_vector())

    def test_drn_round_trip(self):
        box = ParamBox.centered(np.zeros(10), 10.0)
        p = DrnParams(0.1, [0.2, 0.3], -0.1, [0.4, 0.5], [0.6, 0.7], [[0.8], [0.9]], "relu", box)
        q = model_from_dict(json.loads(json.dumps(model_to_dict(p))))
        assert np.array_equal(p.to_vector(), q.to_vector())
        assert q.activation == "relu"

    def test_knn_round_trip(self, rng):
        m = KnnModel(3, rng.normal(size=(10, 2)), rng.normal(size=10))
        q = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        assert q.k == 3
        assert np.allclose(q.train_x, m.train_x)

    def test_drf_round_trip_preserves_weights(self, rng):
        X = rng.uniform(size=(30, 2))
        Y = rng.normal(size=30)
        m = drf_fit(X, Y, DrfHyper(num_trees=8, mtry=1), seed=3)
        q = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        for _ in range(10):
            x = rng.uniform(size=2)
            assert np.allclose(drf_weights(m, x), drf_weights(q, x), atol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            model_from_dict({"kind": "svm"})
