import numpy as np
import pytest

from vscale import conformal

_gauss_bonnet = {"checked": 0, "violations": []}


def _check(metric, K):
    chi = metric.tri.euler_characteristic
    err = abs(float(np.sum(K)) - 2 * np.pi * chi)
    _gauss_bonnet["checked"] += 1
    if err > 1e-9:
        _gauss_bonnet["violations"].append(err)


def pytest_configure(config):
    conformal.add_curvature_hook(_check)
    config._gauss_bonnet = _gauss_bonnet


def pytest_unconfigure(config):
    conformal.remove_curvature_hook(_check)


@pytest.fixture(autouse=True)
def gauss_bonnet_guard():
    """Every curvature vector computed during a test must satisfy Gauss-Bonnet."""
    before = len(_gauss_bonnet["violations"])
    yield
    new = _gauss_bonnet["violations"][before:]
    assert not new, f"Gauss-Bonnet violated by {max(new):.3e}"


@pytest.fixture
def gauss_bonnet_log():
    return _gauss_bonnet


def pytest_collection_modifyitems(config, items):
    # the global Gauss-Bonnet criterion summarizes the whole session, so it runs last
    last = [it for it in items if "test_criterion_8_" in it.nodeid]
    rest = [it for it in items if "test_criterion_8_" not in it.nodeid]
    items[:] = rest + last


_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _criteria[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split("_")[2])):
        outcome, secs = _criteria[name]
        status = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"{status}  {name}  ({secs:.2f}s)")
    tr.write_line(f"curvature evaluations checked for Gauss-Bonnet: {_gauss_bonnet['checked']}")
