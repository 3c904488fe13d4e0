import contextlib
import time

import pytest

_LINES = pytest.StashKey[list]()


class _Verdict:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    @contextlib.contextmanager
    def record(number, title, budget_s=None):
        v = _Verdict()
        t0 = time.perf_counter()
        try:
            yield v
            elapsed = time.perf_counter() - t0
            if budget_s is not None:
                assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            lines.append(f"FAIL criterion {number}: {title} ({time.perf_counter() - t0:.2f}s) {msg}")
            print(lines[-1])
            raise
        lines.append(f"PASS criterion {number}: {title} ({elapsed:.2f}s) {v.detail}".rstrip())
        print(lines[-1])

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
