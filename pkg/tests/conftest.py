import numpy as np
import pytest

from pathtransport.kernels import pure

try:
    from pathtransport.kernels import _speedups
except ImportError:
    _speedups = None

BACKENDS = [pure] if _speedups is None else [pure, _speedups]


@pytest.fixture(params=BACKENDS, ids=lambda mod: mod.BACKEND)
def backend(request):
    """Kernel backend module; parametrizes a test over pure and compiled."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
