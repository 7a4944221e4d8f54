import pytest

from cuspwalk.cusped_graph import CuspedGraph, Vertex
from cuspwalk.green_lab import GreenLab
from cuspwalk.group_model import make_group
from cuspwalk.walk_kernel import WeightedChain, solve_params

ORIGIN = Vertex((), 0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running oracle checks")


@pytest.fixture(scope="session")
def f2():
    return make_group("f2-rel-z")


@pytest.fixture(scope="session")
def z2():
    return make_group("z2-free-z")


@pytest.fixture(scope="session")
def graph(f2):
    return CuspedGraph(f2, 2)


@pytest.fixture(scope="session")
def graph_z2(z2):
    return CuspedGraph(z2, 2)


@pytest.fixture(scope="session")
def params(f2):
    return solve_params(f2, 2, 2, 4)


@pytest.fixture(scope="session")
def chain(params, f2):
    return WeightedChain(params, f2)


@pytest.fixture(scope="session")
def chain_z2(z2):
    return WeightedChain(solve_params(z2, 2, "5/4", 4), z2)


@pytest.fixture(scope="session")
def lab(chain):
    lab = GreenLab(chain)
    lab.spectral_radius_estimate(n_max=20)
    return lab


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in mod.RESULTS:
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
