import numpy as np
import pytest

from hrtfgp import dataset, features


@pytest.fixture(scope="session")
def small_grid():
    return dataset.fibonacci_grid(64)


@pytest.fixture(scope="session")
def small_hrtf(small_grid):
    return dataset.synth_sphere_hrtf(small_grid, 0.0875, 32, 44100.0)


@pytest.fixture(scope="session")
def small_mp(small_hrtf):
    return features.extract_features(small_hrtf, "MP")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
