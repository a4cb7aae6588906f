import numpy as np
import pytest

from dse.datagen import GaussianTaskSpec, paper_directions, sample_task


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def benchmark_directions():
    return paper_directions(17)


@pytest.fixture(scope="session")
def easy_task():
    """Well separated 17-d task along e1."""
    return sample_task(GaussianTaskSpec(17, 3.0, 1.0, None, 200, seed=4))


def random_psd_unit_trace(rng, d):
    a = rng.standard_normal((d, d))
    lam = a.T @ a
    return lam / np.trace(lam)
