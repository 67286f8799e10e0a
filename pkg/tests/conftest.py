import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

RABI = {"omega0": 1.0, "omega1": 0.5, "omega": 0.8}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def rabi_params():
    return dict(RABI)
