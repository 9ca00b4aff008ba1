import numpy as np
import pytest

from crpslab.bounds import synthetic_generator
from crpslab.data import Dataset
from crpslab.rng import generator


@pytest.fixture(scope="session")
def sine_train():
    gen = synthetic_generator("sine")
    return gen.sample_dataset(200, generator(11, "fixture-train"))


@pytest.fixture(scope="session")
def sine_val():
    gen = synthetic_generator("sine")
    return gen.sample_dataset(150, generator(11, "fixture-val"))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240901)


def random_empirical(rng, max_atoms=12, spread=4.0):
    n = int(rng.integers(1, max_atoms + 1))
    atoms = rng.normal(0.0, spread, n)
    w = rng.uniform(0.1, 1.0, n)
    return atoms, w / w.sum()


@pytest.fixture(scope="session")
def tiny_dataset():
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, (60, 2))
    Y = 1.0 + X[:, 0] - 0.5 * X[:, 1] + 0.3 * rng.standard_normal(60)
    return Dataset(X, Y, ("x0", "x1"), source="tiny")
