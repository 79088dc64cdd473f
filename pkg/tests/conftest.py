import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def interior_grid(k=10):
    g = (np.arange(k) + 0.5) / k
    uu, vv = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])
