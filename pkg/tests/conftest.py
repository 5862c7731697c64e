import pytest

from app.src import bounds, eglb
from app.src.locations import skewed_profile
from app.src.model import EquitySpec
from app.src.traces import synth
from tests.builders import make_fleet, small_profile


@pytest.fixture(autouse=True)
def every_online_run_respects_the_dual_norm_bound(monkeypatch):
    """Fail any test whose eGLB run ends with multipliers above the norm bound."""
    checked = []

    def check(schedule, constants, eta, n_slots):
        result = bounds.check_dual_norm(schedule, constants, eta, n_slots)
        checked.append(result)
        assert result.passed, f"final multipliers {result.lhs:.6g} exceed the bound {result.rhs:.6g}"
        return result

    monkeypatch.setattr(eglb, "check_dual_norm", check)
    return checked


@pytest.fixture
def two_dc_fleet():
    return make_fleet([1.0, 1.0], n_gateways=1)


@pytest.fixture
def small_trace():
    """Three DCs, two days, hourly slots."""
    return synth(small_profile(), 48, seed=7)


@pytest.fixture
def small_equity():
    return EquitySpec.uniform(3, 1500.0, 60.0)


@pytest.fixture(scope="session")
def skewed_trace():
    """Ten reference sites, one water-hungry and one carbon-heavy, 18 days hourly."""
    return synth(skewed_profile(), 432, seed=0)
