import numpy as np
import pytest

from gridsim import cases
from gridsim.grid import Line, PowerGrid
from gridsim.lines import RLLine, StaticLine
from gridsim.nodes import PQAlgebraic, SlackAlgebraic, VSIVoltagePT1


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_bus():
    return cases.two_bus()


@pytest.fixture
def slack_vsi():
    return cases.slack_vsi()


@pytest.fixture
def validation_grid():
    return cases.load("validation")


@pytest.fixture(scope="session")
def ieee14():
    return cases.load("ieee14")


@pytest.fixture
def rl_two_bus():
    return PowerGrid(
        {"bus1": SlackAlgebraic(U=1 + 0j), "bus2": PQAlgebraic(P=-0.3, Q=-0.1)},
        {"line1": Line(RLLine(R=0.01, L=0.1 / (2 * np.pi * 50)), "bus1", "bus2")},
    )


def vsi(**overrides):
    params = dict(tau_v=0.1, tau_P=0.2, tau_Q=0.3, K_P=0.5, K_Q=0.1, V_r=1.0, P=0.2, Q=0.05)
    params.update(overrides)
    return VSIVoltagePT1(**params)


def random_complex(rng, size=None, scale=1.0):
    return scale * (rng.normal(size=size) + 1j * rng.normal(size=size))


def static_grid(n_nodes, rng):
    """Random connected grid of PQ nodes behind one slack, static lines only."""
    nodes = {"n0": SlackAlgebraic(U=1 + 0j)}
    for k in range(1, n_nodes):
        nodes[f"n{k}"] = PQAlgebraic(P=float(rng.normal(scale=0.1)), Q=float(rng.normal(scale=0.05)))
    lines = {}
    for k in range(1, n_nodes):
        j = int(rng.integers(0, k))
        lines[f"l{k}"] = Line(StaticLine(Y=complex(rng.uniform(1, 5), -rng.uniform(5, 20))), f"n{j}", f"n{k}")
    return PowerGrid(nodes, lines)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
