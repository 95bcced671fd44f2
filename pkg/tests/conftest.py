import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_problem():
    from picardstop.experiments import gen_problem
    return gen_problem("gaussian_blur", 64)


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
