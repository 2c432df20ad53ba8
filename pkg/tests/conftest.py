import numpy as np
import pytest

from ellipara import shapes
from ellipara.fecm import prepare


@pytest.fixture(scope="session")
def ico4():
    return shapes.icosphere(4)


@pytest.fixture(scope="session")
def blob():
    return shapes.radial_blob(16)


@pytest.fixture(scope="session")
def blob_prepared(blob):
    return prepare(blob)


@pytest.fixture(scope="session")
def ellipsoid_mesh():
    return shapes.ellipsoid((2.0, 1.0, 1.5), frequency=32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
