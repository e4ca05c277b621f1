from __future__ import annotations

import math

import numpy as np
import pytest

from maxcut_rl.graph import Graph, complete_graph, cycle_graph
from maxcut_rl.sdp import Embedding


@pytest.fixture
def k2() -> Graph:
    return Graph(2, ((1, 2, 1),))


@pytest.fixture
def k3() -> Graph:
    return complete_graph(3)


@pytest.fixture
def c5() -> Graph:
    return cycle_graph(5)


@pytest.fixture
def k2_antipodal() -> Embedding:
    return Embedding(np.array([[1.0, 0.0], [-1.0, 0.0]]))


@pytest.fixture
def k3_planar() -> Embedding:
    angles = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
    return Embedding(np.array([[math.cos(a), math.sin(a)] for a in angles]))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; fails the test on FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
