import re

import numpy as np
import pytest

from arcdyn import data_io

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA[key] = _CRITERIA.get(key, True) and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n:2d} {name}: {'PASS' if ok else 'FAIL'}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_split():
    return data_io.gen_synthetic(400, 100, 10, 1e2, seed=3)

