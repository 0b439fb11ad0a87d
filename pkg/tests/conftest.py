import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rs():
    return np.random.default_rng(20240531)


def random_pd(rs, n, cond=10.0):
    Q, _ = np.linalg.qr(rs.normal(size=(n, n)))
    w = np.exp(rs.uniform(0, np.log(cond), size=n))
    return (Q * w) @ Q.T


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
