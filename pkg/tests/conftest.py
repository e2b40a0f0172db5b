import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# numba JIT on first call can blow default deadlines; keep examples modest
settings.register_profile(
    "semap",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("semap")


@pytest.fixture(scope="session")
def small_benchmark():
    """One shared aligned toy benchmark (seed 0, defaults)."""
    from semap.evaluator import make_synthetic_benchmark

    return make_synthetic_benchmark(0, per_class=12)


@pytest.fixture(scope="session")
def adversarial_benchmark():
    """Planted indices outside [0, m): prefix mapping carries no signal."""
    from semap.evaluator import make_synthetic_benchmark

    return make_synthetic_benchmark(3, per_class=12, rm_adversarial=True)


@pytest.fixture()
def np_rng():
    return np.random.default_rng(20240801)
