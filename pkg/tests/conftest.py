"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

_OUTCOMES: dict[str, bool] = {}
_LABELS: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            _LABELS[item.nodeid] = marker.args[0]


def pytest_runtest_logreport(report):
    label = _LABELS.get(report.nodeid)
    if label is None:
        return
    if report.when == "call" or report.failed:
        _OUTCOMES[label] = _OUTCOMES.get(label, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance")
    for label in dict.fromkeys(_LABELS.values()):
        if label in _OUTCOMES:
            terminalreporter.write_line(f"{label}: {'PASS' if _OUTCOMES[label] else 'FAIL'}")
