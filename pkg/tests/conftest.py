import re

_CRITERIA: dict[int, str] = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        if _CRITERIA.get(n) != "FAIL":
            _CRITERIA[n] = outcome
        _CRITERIA.setdefault(-n, m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(k for k in _CRITERIA if k > 0):
        terminalreporter.write_line(f"criterion {n:2d}: {_CRITERIA[n]}  {_CRITERIA[-n]}")
