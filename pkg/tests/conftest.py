from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scenario_dp import (
    CustomerSpec,
    DeliveryCostModel,
    GiantTour,
    HoldingPenaltyModel,
    RoutingInstance,
)

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def line_metric(size: int) -> np.ndarray:
    idx = np.arange(size)
    return np.abs(idx[:, None] - idx[None, :]).astype(float)


@pytest.fixture
def toy_routing():
    return RoutingInstance(line_metric(5), 5)


@pytest.fixture
def toy_tour():
    return GiantTour((1, 2, 3))


@pytest.fixture
def toy_demands():
    return np.array([2, 3, 4])


@pytest.fixture
def toy_customer():
    spec = CustomerSpec(capacity=2, initial_inventory=1, holding=0.0, stockout_multiplier=2.0, horizon=2)
    costs = DeliveryCostModel(fixed=0.0, unit=1.0)
    holding = HoldingPenaltyModel.tabular([5.0, 1.0, 0.0])
    return spec, costs, holding, np.array([1, 1])


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
