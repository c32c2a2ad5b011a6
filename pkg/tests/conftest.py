import time
from contextlib import contextmanager

import pytest

_LINES: list[str] = []


class CriterionLog:
    """Collects one verdict line per acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.detail = ""
        self.t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def note(self, text: str) -> None:
        self.detail = text


@pytest.fixture
def criterion(request):
    """Wrap an acceptance check so its verdict is printed in the summary."""
    logs = []

    @contextmanager
    def record(number: int, title: str):
        log = CriterionLog(number, title)
        logs.append(log)
        ok = False
        try:
            yield log
            ok = True
        finally:
            verdict = "PASS" if ok else "FAIL"
            line = f"criterion {log.number:>2} {verdict}  {log.title} ({log.elapsed:.1f} s)"
            if log.detail:
                line += f"  {log.detail}"
            _LINES.append(line)
            print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
