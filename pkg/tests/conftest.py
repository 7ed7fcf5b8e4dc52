import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=50,
    suppress_health_check=[HealthCheck.too_slow], deadline=None)
settings.load_profile("default")


def random_psd_stack(rng, T, p, extra=2):
    """Stack of T random symmetric PSD (generically PD) p x p matrices."""
    out = np.empty((T, p, p))
    for t in range(T):
        A = rng.normal(size=(p, extra * p))
        out[t] = A @ A.T / (extra * p)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
