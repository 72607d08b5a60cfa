import numpy as np
import pytest

from kaczmarz_approx import engine

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion covered by the test")


def pytest_collection_modifyitems(session, config, items):
    # acceptance tests run last so the invariant audit has seen every other run
    items.sort(key=lambda it: it.nodeid.split("::")[0].endswith("test_acceptance.py"))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, label in getattr(report, "criteria", []):
        ok = report.outcome == "passed"
        prev = _CRITERIA.get(key, (label, True))
        _CRITERIA[key] = (label, prev[1] and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = [(m.args[0], m.args[1]) for m in item.iter_markers("criterion")]


def _criterion_order(key):
    num = "".join(c for c in key if c.isdigit())
    return int(num), key


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    if _CRITERIA:
        tr.section("acceptance criteria")
        for key in sorted(_CRITERIA, key=_criterion_order):
            label, ok = _CRITERIA[key]
            tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {label}")
    audit = engine.AUDIT.as_dict()
    tr.section("invariant audit (every run with known truth)")
    tr.write_line(f"runs={audit['runs']} steps={audit['steps']} "
                  f"monotonicity_violations={audit['monotonicity_violations']} "
                  f"stability_violations={audit['stability_violations']}")


def pytest_sessionfinish(session, exitstatus):
    if engine.AUDIT.violations and session.exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_system(rng):
    def make(m=8, n=5):
        return engine.LinearSystem.from_truth(rng.standard_normal((m, n)), rng.standard_normal(n))
    return make
