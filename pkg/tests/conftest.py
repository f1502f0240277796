import numpy as np
import pytest

from pprdyn.graph import DynamicGraph


def random_graph(n, m, seed=0, connected=True):
    """Random simple graph; with ``connected`` a random spanning tree comes
    first so every node has an edge."""
    rng = np.random.default_rng(seed)
    g = DynamicGraph(n)
    if connected:
        order = rng.permutation(n)
        for k in range(1, n):
            g.insert_edge(int(order[k]), int(order[rng.integers(0, k)]))
    while g.m < m:
        u, v = rng.integers(0, n, size=2)
        if u != v:
            g.insert_edge(int(u), int(v))
    return g


def complete_graph(n):
    return DynamicGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


@pytest.fixture
def k2():
    return DynamicGraph.from_edges(2, [(0, 1)])


@pytest.fixture
def k3():
    return complete_graph(3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
