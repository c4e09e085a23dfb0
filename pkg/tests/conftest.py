import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fast", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fast")

from mdg.diffusion import make_schedule
from mdg.world import make_world


@pytest.fixture(scope="session")
def schedule():
    return make_schedule()


@pytest.fixture(scope="session")
def small_world():
    # tiny world with a perfectly conditioned encoder, for exact-math tests
    return make_world(
        concepts=4,
        dim=8,
        latent_dim=8,
        sigma_mod=0.05,
        seed=7,
        mean_jitter=0.0,
        mean_norm_spread=0.0,
        var_range=(0.04, 0.09),
        bias_scale=0.1,
    )


@pytest.fixture(scope="session")
def default_world():
    return make_world(seed=20)
