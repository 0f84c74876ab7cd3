import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kpplab.periodic import PeriodicFunction
from kpplab.spectral import adjoint_kernel, speed_bundle

settings.register_profile("kpplab", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("kpplab")

warnings.filterwarnings("ignore", message="The TBB threading layer")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def g_hom():
    return PeriodicFunction.constant(1.0)


@pytest.fixture(scope="session")
def g_per():
    return PeriodicFunction.from_coeffs(1.0, [0.5])


@pytest.fixture(scope="session")
def bundle_hom(g_hom):
    return speed_bundle(g_hom)


@pytest.fixture(scope="session")
def bundle_per(g_per):
    return speed_bundle(g_per)


@pytest.fixture(scope="session")
def kernel_per(bundle_per):
    return adjoint_kernel(bundle_per)


def bump(y):
    return np.where((y > 0) & (y < 3), (y * (3 - y)) ** 2, 0.0)
