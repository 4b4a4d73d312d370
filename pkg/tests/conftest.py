import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from acorn.graph import SocialGraph

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.load_profile("default")


@st.composite
def tiny_graphs(draw, max_nodes=8, max_edges=14, min_nodes=2):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    k = draw(st.integers(0, min(max_edges, len(pairs))))
    idx = draw(st.lists(st.integers(0, len(pairs) - 1), min_size=k, max_size=k, unique=True))
    return SocialGraph.from_edges(n, [pairs[i] for i in idx])


def random_tiny_graph(rng, max_nodes=12, max_edges=25, min_nodes=3):
    n = int(rng.integers(min_nodes, max_nodes + 1))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    k = int(rng.integers(1, min(max_edges, len(pairs)) + 1))
    idx = rng.choice(len(pairs), size=k, replace=False)
    return SocialGraph.from_edges(n, [pairs[i] for i in idx])


@pytest.fixture
def chain():
    return SocialGraph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def star():
    return SocialGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
