import numpy as np
import pytest

from dealermodel.core import GridSpec, ModelParams

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(number, passed, detail)``."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def _report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda t: t[0]):
        terminalreporter.write_line(line)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def grid():
    return GridSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
