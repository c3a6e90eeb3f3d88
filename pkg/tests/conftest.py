import time

import numpy as np
import pytest

from niconsensus import catalog
from niconsensus.graph import Topology
from niconsensus.network import NetworkAssembly
from niconsensus.scenario import bundled_scenario
from niconsensus.sim import integrate_closed_loop

_criteria = []


@pytest.fixture(scope="session")
def example_assembly():
    return NetworkAssembly.from_entries(
        Topology.path(3), catalog.example_plants(), catalog.example_controllers()
    )


@pytest.fixture(scope="session")
def example_x0():
    return np.array([30.0, 2.0, -8.0, 0.0, 0.0])


@pytest.fixture(scope="session")
def example_run(example_assembly, example_x0):
    """One long simulation of the bundled scenario, shared across modules."""
    cfg = bundled_scenario("paper-fig7").integrator
    t0 = time.perf_counter()
    traj = integrate_closed_loop(example_assembly, example_x0, cfg)
    return traj, time.perf_counter() - t0


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "criterion", None)
    if marker is not None:
        _criteria.append((marker, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (label, text), outcome in _criteria:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] C{label}: {text}")
