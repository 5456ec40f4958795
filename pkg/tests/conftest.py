import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cyclab.generators import disc

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disc64():
    """Normalized midpoint quadrature of the unit disc at step 1/64."""
    return disc(step=1 / 64, normalized=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
