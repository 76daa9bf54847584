import numpy as np
import pytest

from hotfringe import physics
from hotfringe.interferometer import InterferometerGeometry


@pytest.fixture(scope="session")
def model():
    """Shared default emission model (cooling curve built once)."""
    m = physics.EmissionModel()
    m._master_curve()
    return m


@pytest.fixture(scope="session")
def geometry():
    return InterferometerGeometry()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
