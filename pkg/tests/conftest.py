import re

import numpy as np
import pytest

from gazeaeg.dataset import Essay
from gazeaeg.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return make_synthetic_corpus(n_essays=120, prompts=(1, 2, 3, 4), seed=11)


@pytest.fixture
def essay():
    return Essay(7, 3, "I agree with this. Computers help people learn! @CAPS1 said so.", 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance summary: test_acceptance.py::test_cNN_* gets one line per criterion
_criteria: dict[int, tuple[str, str]] = {}
_CRITERION = re.compile(r"test_c(\d+)_")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if item.module.__name__.rpartition(".")[2] != "test_acceptance" or not m:
        return
    n = int(m.group(1))
    props = dict(item.user_properties)
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        detail = props.get("detail", "")
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2].removeprefix("Skipped: ")
        _criteria[n] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, detail = _criteria[n]
        terminalreporter.write_line(f"{status} criterion {n}: {detail}")
