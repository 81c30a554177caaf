import numpy as np
import pytest

from hirex import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the jit kernels once so timed tests measure steady state
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
