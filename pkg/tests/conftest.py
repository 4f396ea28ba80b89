import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from censored_bernstein import Stable, TemperedStable, make_pair  # noqa: E402


@pytest.fixture(scope="session")
def stable_pairs():
    cache = {}

    def get(alpha):
        if alpha not in cache:
            cache[alpha] = make_pair(Stable(alpha))
        return cache[alpha]

    return get


@pytest.fixture(scope="session")
def half(stable_pairs):
    return stable_pairs(0.5)


@pytest.fixture(scope="session")
def tempered():
    return make_pair(TemperedStable(0.5, 1.0))


#: ``(criterion, passed, detail)`` tuples filled in by the acceptance suite.
ACCEPTANCE = []


@pytest.fixture
def record_acceptance():
    def record(number, passed, detail):
        ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
