import sys
import time
from pathlib import Path

import pytest
from hypothesis import settings

from crvex.study import StudyConfig, run_study

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("default")

TABLE_P_MIN = (1.5, 2.0, 2.5)
TABLE_ALPHA = (0.1, 0.25, 0.5, 1.0)


@pytest.fixture(scope="session")
def table_study():
    """Levels 1-6 for all (p_min, alpha) pairs with eps = 1; returns (reports, seconds)."""
    t0 = time.process_time()
    reports = run_study(StudyConfig(p_min=TABLE_P_MIN, alpha=TABLE_ALPHA, eps=(1.0,), levels=6))
    return reports, time.process_time() - t0


@pytest.fixture(scope="session")
def half_eps_study():
    return run_study(StudyConfig(p_min=(1.5,), alpha=(1.0,), eps=(0.5,), levels=6))


_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(number, ok, detail)."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
