from __future__ import annotations

from datetime import datetime, timezone

import pytest

from loggrouper.ingest import WindowSpec, select_window
from loggrouper.pipeline import RunConfig, run_matrix

from .oracles import make_template_records

# Label -> outcome for every test marked @pytest.mark.acceptance, printed as a
# final summary block so each criterion gets exactly one pass/fail line.
_ACCEPTANCE: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): records the test as a named acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.kwargs.get("label") or marker.args[0]
    if report.when == "call":
        _ACCEPTANCE[label] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.failed:
        _ACCEPTANCE[label] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[label]}: {label}")


NIGHT_WINDOW = WindowSpec(
    start=datetime(2025, 11, 2, 22, 0, tzinfo=timezone.utc),
    end=datetime(2025, 11, 3, 6, 0, tzinfo=timezone.utc),
)

FROZEN_CREATED_AT = datetime(2025, 11, 3, 7, 0, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def template_corpus():
    """60 records from three message templates, windowed and ordered."""
    records, planted = make_template_records()
    corpus = select_window(records, NIGHT_WINDOW, created_at=FROZEN_CREATED_AT)
    by_id = {r.id: planted[i] for i, r in enumerate(records)}
    truth = [by_id[r.id] for r in corpus.records]
    return corpus, truth


@pytest.fixture(scope="session")
def template_run(template_corpus):
    """One full comparison-matrix run over the template corpus."""
    corpus, _ = template_corpus
    return run_matrix(corpus, RunConfig(window=NIGHT_WINDOW))
