import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    # SLSQP in the reference oracle warns when starts sit outside bounds
    warnings.filterwarnings("ignore", message="Values in x were outside bounds")


class _Runs:
    """Solver runs on the toy fixtures, computed once per session."""

    def __init__(self):
        self._cache = {}

    def get(self, name: str):
        if name not in self._cache:
            from ucac.driver import DriverOptions, solve_ucac

            from _cases import FIXTURES, load

            case = load(FIXTURES[name])
            self._cache[name] = (case, solve_ucac(case, DriverOptions(time_limit=600)))
        return self._cache[name]


@pytest.fixture(scope="session")
def fixture_runs():
    return _Runs()


_CRITERIA: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, title = marker.args
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[n] = f"criterion {n} {word}: {title}"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
