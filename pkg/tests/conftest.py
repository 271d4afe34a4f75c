"""Collects one pass/fail line per acceptance criterion and prints them at the end."""
import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    entry = _criteria.setdefault(n, {"passed": True, "ran": False, "notes": []})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["passed"] = False
    if rep.when == "call":
        entry["notes"].extend(v for k, v in item.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["passed"] and e["ran"] else ("FAIL" if not e["passed"] else "SKIP")
        detail = "; ".join(e["notes"])
        tr.write_line(f"criterion {n:>2}: {status}" + (f"  ({detail})" if detail else ""))
