import numpy as np
import pytest

from ppcov.geometry import EvaluationMesh, build_spatial_distribution
from ppcov.simulate import linear_covariate_mesh


@pytest.fixture(scope="session")
def mesh64():
    """Unit square, Z(x, y) = x, 64x64 cells."""
    return linear_covariate_mesh(64)


@pytest.fixture(scope="session")
def mesh256():
    return linear_covariate_mesh(256)


@pytest.fixture(scope="session")
def dist64(mesh64):
    grid, window = mesh64
    return build_spatial_distribution(grid, window)


@pytest.fixture(scope="session")
def dist256(mesh256):
    grid, window = mesh256
    return build_spatial_distribution(grid, window)


@pytest.fixture(scope="session")
def emesh64(mesh64):
    grid, window = mesh64
    return EvaluationMesh(grid, window)


@pytest.fixture(scope="session")
def emesh256(mesh256):
    grid, window = mesh256
    return EvaluationMesh(grid, window)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
