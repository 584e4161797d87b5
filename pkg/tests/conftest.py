import numpy as np
import pytest

from hlikelihood.items import ObservedData


@pytest.fixture
def exp_data():
    """Ten exponential observations with mean 2."""
    rng = np.random.default_rng(20240)
    return ObservedData.of(rng.exponential(2.0, size=10))


@pytest.fixture
def constant_data():
    def make(n, value=1.0):
        return ObservedData.of(np.full(n, value))

    return make


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "y.txt"
    path.write_text("# exponential sample\n1.5\n0.5\n\n2.0  # third\n1.0\n3.0\n", encoding="utf-8")
    return path
