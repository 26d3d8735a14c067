import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    num = title = None
    for name, value in report.user_properties:
        if name == "criterion":
            num, title = value
    if num is None:
        return
    entry = _criteria.setdefault(num, {"title": title, "ok": True, "details": []})
    entry["ok"] &= report.passed
    entry["details"] += [v for k, v in report.user_properties if k == "detail"]


@pytest.fixture(autouse=True)
def _criterion_tag(request, record_property):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        record_property("criterion", tuple(mark.args))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        status = "PASS" if e["ok"] else "FAIL"
        tr.write_line(f"[{status}] {num:>2}. {e['title']}")
        for d in e["details"]:
            tr.write_line(f"         {d}")
