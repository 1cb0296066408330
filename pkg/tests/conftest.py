"""
Test Fixtures - shared rate models and orders
"""
import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from src.models.domain import ConstantOrder, RateModel
from src.services.combinat_service import clear_theta_cache
from src.services.rate_service import RateService, make_rate_model
from src.services.special_functions import clear_kernel_caches

hypothesis_settings.register_profile(
    "gfbp", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
hypothesis_settings.load_profile("gfbp")


@pytest.fixture(autouse=True)
def fresh_caches():
    """Kernel and pattern caches start empty in every test"""
    clear_kernel_caches()
    clear_theta_cache()
    yield


@pytest.fixture
def generic_model() -> RateModel:
    """n0=1, k=2, rate(n, 1) = n, rate(n, 2) = 1"""
    return make_rate_model(1, 2, lambda n, i: float(n) if i == 1 else 1.0)


@pytest.fixture
def oracle_model() -> RateModel:
    """n0=0, k=2, rate(n, 1) = 1 + n/10, rate(n, 2) = 0.5"""
    return make_rate_model(0, 2, lambda n, i: 1.0 + n / 10.0 if i == 1 else 0.5)


@pytest.fixture
def poisson_model() -> RateModel:
    return RateService.preset("tfpp", {"lambda": 1.0})


@pytest.fixture
def gfcp_model() -> RateModel:
    """Jumps of size 1 and 2 with rates 1 and 3"""
    return RateService.preset("gfcp", {"lambdas": [1.0, 3.0]})


@pytest.fixture
def linear_birth_model() -> RateModel:
    """Pure birth with lambda_n = n from n0 = 1"""
    return RateService.preset("fpbp", {"rates": "n"})


@pytest.fixture
def half_order() -> ConstantOrder:
    return ConstantOrder(0.5)
