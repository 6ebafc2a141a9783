from datetime import datetime, timezone

import pytest

from metavault.bench import build_fixture
from metavault.catalog import Catalog
from metavault.corpus import generate_scaled_corpus
from metavault.vault import define_schema_tectoniq

T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)


@pytest.fixture
def schema():
    return define_schema_tectoniq()


@pytest.fixture
def catalog(schema):
    return Catalog.in_memory(schema)


@pytest.fixture(scope="session")
def corpus1():
    return generate_scaled_corpus(1)


@pytest.fixture(scope="session")
def loaded1():
    """Scale-1 corpus ingested into both backends. Do not mutate."""
    return build_fixture(1)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, corpus1):
    from metavault.corpus import write_corpus

    root = tmp_path_factory.mktemp("corpus")
    write_corpus(corpus1, root)
    return root


# acceptance reporting: one line per criterion in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, text = mark.args
    detail = dict(item.user_properties).get("detail", "")
    verdict = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    if verdict == "PASS" and dict(item.user_properties).get("soft_warning"):
        verdict = "PASS (soft warning)"
    _CRITERIA[n] = (verdict, text, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict, text, detail = _CRITERIA[n]
        line = f"criterion {n}: {verdict} - {text}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
