from __future__ import annotations

from pathlib import Path

import pytest

from kgqa import Catalog, load_ntriples, load_vectors

FIXTURES = Path(__file__).parent / "fixtures"
DBR = "http://dbpedia.org/resource/"
DBO = "http://dbpedia.org/ontology/"
DBP = "http://dbpedia.org/property/"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def holden_kg():
    return load_ntriples(FIXTURES / "holden.nt")


@pytest.fixture(scope="session")
def toy_vectors():
    return load_vectors(FIXTURES / "vectors.txt")


@pytest.fixture(scope="session")
def holden_catalog(holden_kg, toy_vectors):
    return Catalog(holden_kg, vectors=toy_vectors)


# -- acceptance reporting: one pass/fail line per criterion --------------------

_criteria: dict[int, tuple[str, list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    _, outcomes = _criteria.setdefault(number, (title, []))
    outcomes.append("passed" if report.passed else ("skipped" if report.skipped else "failed"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({len(outcomes)} check(s))")
