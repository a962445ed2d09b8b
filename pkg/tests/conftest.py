import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kirchhoff_nf.spectral_core import Lattice

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=[(1, 3.0), (2, 2.3)], ids=["d1-ball3", "d2-ball2.3"])
def lattice(request):
    dim, radius = request.param
    return Lattice.ball(dim, radius)

