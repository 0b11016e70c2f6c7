import warnings

import numpy as np
import pytest

# nodeid -> (number, title) for tests marked with @pytest.mark.criterion
_MARKERS: dict[str, tuple[int, str]] = {}
# number -> (title, PASS/FAIL/SKIP)
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=RuntimeWarning, module="slepian_qns")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _MARKERS[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    marker = _MARKERS.get(report.nodeid)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "skipped": "SKIP"}.get(report.outcome, "FAIL")
        _CRITERIA[marker[0]] = (marker[1], status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
