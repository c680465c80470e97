import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from apis.model import Params  # noqa: E402

settings.register_profile("apis", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("apis")

FIG2 = dict(r=1500.0, K_hat=1e6, rho=0.9, d_h=0.15, d_m=0.1, mu_h=0.1, mu_m=0.01, alpha=0.005,
            c=0.005, beta_h=0.24, beta_mh_hat=0.03, beta_mh_tilde=0.005, beta_hm_hat=0.03)
FIG3 = dict(FIG2, K_hat=1600001.0, alpha=0.05, beta_h=0.3, beta_mh_hat=0.08, beta_mh_tilde=0.001)
FIG1 = dict(FIG2, K_hat=4e6, d_h=0.01, c=0.01)


@pytest.fixture
def p2():
    return Params(**FIG2)


@pytest.fixture
def p3():
    return Params(**FIG3)


@pytest.fixture
def p1():
    return Params(**FIG1)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
