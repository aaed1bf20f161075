import warnings

import numpy as np
import pytest

from docking_ocp.errors import PhysicalityWarning
from docking_ocp.scenario import flyaround


@pytest.fixture(scope="session")
def scenario():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PhysicalityWarning)
        return flyaround()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_quaternion(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)
