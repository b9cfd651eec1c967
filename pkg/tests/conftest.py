import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion and enforcing its runtime budget."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def record(number: int, title: str, budget: float):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            elapsed = time.perf_counter() - start
            assert elapsed < budget, f"runtime {elapsed:.1f} s exceeds the {budget:g} s budget"
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            results.append((number, status, title, elapsed, budget))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = sorted(config.stash.get(_RESULTS, []))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, elapsed, budget in results:
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  ({elapsed:.1f} s, budget {budget:g} s)")
