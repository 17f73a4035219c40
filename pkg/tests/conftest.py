"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

import pytest

_VERDICTS = {}  # nodeid -> line


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` records the criterion's line, then asserts."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[request.node.nodeid] = (number, line)
        assert ok, line

    return record


def pytest_runtest_logreport(report):
    # a criterion test that crashed before recording still gets a FAIL line
    if report.when == "call" and "test_acceptance" in report.nodeid and report.nodeid not in _VERDICTS:
        name = report.nodeid.split("::")[-1]
        number = int(name.split("_")[2]) if name.startswith("test_criterion_") else 0
        status = "PASS" if report.passed else "FAIL"
        _VERDICTS[report.nodeid] = (number, f"criterion {number}: {status}  {name}")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS.values()):
            terminalreporter.write_line(line)
