import numpy as np
import pytest

from octsvm.core import Dataset


def random_instance(seed: int, n: int, p: int) -> Dataset:
    """Random features in [0,1] with random two-class labels."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    y = np.where(rng.random(n) < 0.5, -1, 1)
    if len(set(y.tolist())) == 1:
        y[0] = -y[0]
    return Dataset(X, y)


@pytest.fixture
def two_point_1d() -> Dataset:
    return Dataset(np.array([[0.0], [1.0]]), np.array([-1, 1]))


@pytest.fixture
def quartet_1d() -> Dataset:
    return Dataset(np.array([[0.1], [0.2], [0.8], [0.9]]),
                   np.array([-1, -1, 1, 1]))
