"""Shared fixtures plus a summary of the acceptance checks.

Acceptance tests are named ``test_criterion_<k>_<slug>``; after a run that
included any of them, one PASS/FAIL line per criterion is printed so the
overall state is readable at a glance.
"""

import pathlib
import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_([a-z0-9_]+)")
_RESULTS = {}


@pytest.fixture(scope="session")
def data_dir():
    return pathlib.Path(__file__).parent / "data"


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    num, slug = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call":
        _RESULTS[num] = (slug, report.outcome)
    elif report.when == "setup" and report.outcome != "passed":
        _RESULTS[num] = (slug, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        slug, outcome = _RESULTS[num]
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        tr.write_line(f"[{word}] criterion {num}: {slug}")
