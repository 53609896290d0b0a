import numpy as np
import pytest

from subset_shapley import Dataset, Partition, generate_sinusoid, SinusoidConfig


def make_toy() -> tuple[Dataset, Partition]:
    """Three singleton subsets at x = 1/8, 6/8, 7/8 with y = x."""
    x = np.array([1 / 8, 6 / 8, 7 / 8])
    ds = Dataset(x.reshape(-1, 1), x.copy(), np.array([1, 2, 3]), ("x",))
    return ds, Partition(np.array([0, 1, 2]), ("1", "2", "3"))


TOY_POINT = np.array([[2 / 8]])


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture(scope="session")
def sinusoid():
    return generate_sinusoid(SinusoidConfig(seed=7))
