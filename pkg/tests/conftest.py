import numpy as np
import pytest

from app.services.mesh import build_ball_mesh, build_interval_mesh


@pytest.fixture(scope="session")
def interval_64():
    return build_interval_mesh(64)


@pytest.fixture(scope="session")
def ball_0():
    return build_ball_mesh(0)


@pytest.fixture(scope="session")
def ball_1():
    return build_ball_mesh(1)


@pytest.fixture(scope="session")
def polyhedral_meshes():
    return [build_ball_mesh(level, "polyhedral") for level in range(4)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
