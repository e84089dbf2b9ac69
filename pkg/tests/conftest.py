import numpy as np
import pytest

from lks.grids import Field, Grid
from lks.kernel import KernelSpec


@pytest.fixture
def grid_1d():
    return Grid(1, (16.0,), (256,))


@pytest.fixture
def bump_1d(grid_1d):
    return Field.from_function(
        grid_1d, lambda x: np.exp(-((x - 8.0) ** 2) / (2 * 0.5**2))
    )


@pytest.fixture
def canonical_1d():
    return KernelSpec.canonical(1)
