import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from towerdecay.systems import TailModel, build_iid_system, build_lsv_system

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_POINT = (0.5, 0.5)
THREE_POINT = (0.5, 0.25, 0.25)


@pytest.fixture
def two_point():
    return build_iid_system(TailModel.empirical(TWO_POINT))


@pytest.fixture
def three_point():
    return build_iid_system(TailModel.empirical(THREE_POINT))


@pytest.fixture(scope="session")
def lsv_small():
    return build_lsv_system(0.5, n_cells=40, n_quadrature=100, seed=3)


@pytest.fixture(scope="session")
def lsv_default():
    return build_lsv_system(0.5, n_cells=200, n_quadrature=500, seed=0)


def random_pmf(draw_weights):
    w = np.asarray(draw_weights, dtype=float)
    return w / w.sum()


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    return pytestconfig.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    report = config.stash.get(ACCEPTANCE, None)
    if report:
        terminalreporter.section("acceptance criteria")
        for number in sorted(report):
            terminalreporter.write_line(report[number])
