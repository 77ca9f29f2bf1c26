import numpy as np
import pytest

from mhdlab.field import GridSpec


@pytest.fixture
def grid2():
    return GridSpec(2, 64, 8.0)


@pytest.fixture
def grid3():
    return GridSpec(3, 32, 8.0)


def gaussian(grid, var=1.0, center=None):
    c = center if center is not None else (0.0,) * grid.d
    r2 = sum((x - c0) ** 2 for x, c0 in zip(grid.coords, c))
    return np.broadcast_to(np.exp(-r2 / (2 * var)), grid.shape).copy()


def smooth_random(grid, rng, ncomp=None, width=1.0):
    """Random field with a Gaussian spectrum cut-off and a Gaussian envelope."""
    from mhdlab.field import from_spectral, to_spectral

    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    f = rng.standard_normal(shape)
    fh = to_spectral(f, grid) * np.exp(-grid.k2 * width**2)
    return from_spectral(fh, grid) * gaussian(grid, var=(grid.L / 5) ** 2)
