import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epicone.spectral_functions import ADMISSIBLE_DEFAULTS

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FAMILY_IDS = [f.label for f in ADMISSIBLE_DEFAULTS]


@pytest.fixture(params=ADMISSIBLE_DEFAULTS, ids=FAMILY_IDS)
def family(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, floor=1e-2):
    M = rng.standard_normal((d, d))
    return M.T @ M + floor * np.eye(d)


def random_sym(rng, d):
    G = rng.standard_normal((d, d))
    return 0.5 * (G + G.T)


def random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))
