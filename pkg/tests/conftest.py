import pytest

_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    _lines.append((number, f"[{status}] criterion {number:>2} {title}" + (f" ({detail})" if detail else "")))


def pytest_terminal_summary(terminalreporter):
    if not _lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_lines):
        terminalreporter.write_line(line)
