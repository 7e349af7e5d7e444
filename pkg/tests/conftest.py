import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # First jit call compiles; keep that cost out of individual timings.
    from spatialcurate import _kernels

    _kernels.block_stats(np.ones((8, 8)), 8)
    _kernels.bin_objects(
        np.zeros(1), np.zeros(1), np.zeros(1), -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 2, 2, 2
    )
    _kernels.bilinear(np.ones((1, 1, 2, 2)), 3, 3)
    yield
