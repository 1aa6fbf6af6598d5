import pytest

CRITERIA = {
    1: "coin-flip optimum",
    2: "all-in ruin median",
    3: "bitcoin small-miner example",
    4: "compound lottery equals Poisson reward model",
    5: "stage return moments by Monte Carlo",
    6: "closed-form vs fixed-point equilibrium",
    7: "equilibrium share predictions",
    8: "leverage sweep zero crossing",
    9: "property suites",
}

_outcomes = {}
_notes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.failed or (report.when == "setup" and report.skipped):
        ok = report.passed and report.when == "call"
        prev = _outcomes.get(crit, True)
        _outcomes[crit] = prev and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


@pytest.fixture
def note(request):
    marker = request.node.get_closest_marker("criterion")

    def add(text):
        _notes.setdefault(marker.args[0], []).append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n}: {CRITERIA.get(n, '')}")
        for text in _notes.get(n, []):
            terminalreporter.write_line(f"         {text}")
