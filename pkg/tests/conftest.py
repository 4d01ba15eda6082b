import numpy as np
import pytest

from boqc.angles import DyadicAngle
from boqc.builtin import grover2_graph, lazy7_graph, lazy7_order
from boqc.graphstate import OpenGraph


@pytest.fixture
def path_graph():
    """Three-node teleport chain, the smallest graph with flow."""
    return OpenGraph(vertices={1, 2, 3}, edges={(1, 2), (2, 3)},
                     inputs={1}, outputs={3})


@pytest.fixture
def path_graph_q():
    """Path chain declared with quantum input and output."""
    return OpenGraph(vertices={1, 2, 3}, edges={(1, 2), (2, 3)},
                     inputs={1}, outputs={3},
                     quantum_inputs={1}, quantum_outputs={3})


@pytest.fixture
def grover2():
    return grover2_graph()


@pytest.fixture
def lazy7():
    return lazy7_graph()


@pytest.fixture
def lazy7_total_order():
    return lazy7_order()


def random_angles(g, b, rng, nodes=None):
    nodes = g.measured if nodes is None else nodes
    return {i: DyadicAngle(int(rng.integers(0, 1 << b)), b) for i in nodes}


def random_state(rng, n_qubits):
    v = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    return v / np.linalg.norm(v)
