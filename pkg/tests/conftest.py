"""Shared fixtures: default configuration, meshes, and a standard scenario."""

import numpy as np
import pytest

from retractlab.fem import Material, build_slab_mesh
from retractlab.model import Config, make_grid


@pytest.fixture(scope="session")
def config():
    return Config()


@pytest.fixture(scope="session")
def grid7(config):
    return make_grid(config.grid_n, config.tissue_size[:2])


@pytest.fixture(scope="session")
def grid3(config):
    return make_grid(3, config.tissue_size[:2])


@pytest.fixture(scope="session")
def std_mesh():
    """The default slab discretization used by the executive."""
    return build_slab_mesh((100.0, 120.0, 5.0), (20, 24, 1))


@pytest.fixture(scope="session")
def small_mesh():
    """A coarse slab for solver tests that need many equilibrium solves."""
    return build_slab_mesh((40.0, 40.0, 5.0), (8, 8, 1))


@pytest.fixture(scope="session")
def material():
    return Material()


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
