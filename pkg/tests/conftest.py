import numpy as np
import pytest

from liveness import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


CRITERIA = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then fail the test if anything went wrong."""

    def record(number, title, problems, detail=""):
        status = "PASS" if not problems else "FAIL"
        line = f"criterion {number} ({title}): {status}"
        if detail:
            line += f"; {detail}"
        if problems:
            line += "; " + "; ".join(problems)
        CRITERIA.append((number, line))
        print(line)
        assert not problems, line

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
