import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record and print one acceptance line, then assert it."""

    def check(number, ok, detail):
        line = "ACCEPTANCE %-2s %s  %s" % (number, "PASS" if ok else "FAIL", detail)
        request.config.stash.setdefault(_VERDICTS, []).append((number, line))
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
