"""Built-in graphs and scenarios.

``grover2``: the joined two-client graph for a 2-qubit amplitude
amplification with one oracle query; the oracle client owns the first two
layers, the main client the rest.  ``lazy7``: the 7-node single-client
graph that illustrates the just-in-time scheduler (peak of four live
qubits against three outputs).  Placeholder angles: the interesting angle
tables belong to the companion algorithm work, not here.
"""

from __future__ import annotations

from .angles import DyadicAngle
from .graphstate import ClientGraphSpec, OpenGraph, Slot, TotalOrder
from .protocol import AlicePreSpec, OscarPreSpec, PublicInfo, public_info_for


def grover2_graph() -> OpenGraph:
    return OpenGraph(
        vertices=frozenset(range(1, 9)),
        edges=frozenset([(2, 3), (1, 4), (3, 4), (5, 6), (6, 7), (5, 8),
                         (7, 2), (8, 1)]),
        inputs=frozenset({5, 6}),
        outputs=frozenset({3, 4}),
        alice_nodes=frozenset({1, 2, 3, 4}),
        oscar_nodes=frozenset({5, 6, 7, 8}),
    )


def grover2_pre_specs(b: int = 4) -> tuple[AlicePreSpec, OscarPreSpec]:
    """The two fragments and wiring that join into ``grover2_graph``."""
    alice = ClientGraphSpec(
        vertices=frozenset({1, 2, 3, 4}),
        edges=frozenset([(2, 3), (1, 4), (3, 4)]),
        slots=(Slot(attach=frozenset({1, 2})),),
    )
    oscar = ClientGraphSpec(
        vertices=frozenset({5, 6, 7, 8}),
        edges=frozenset([(5, 6), (6, 7), (5, 8)]),
    )
    return (
        AlicePreSpec(graph=alice, connection=((7, 2), (8, 1)),
                     inputs=frozenset({5, 6}), outputs=frozenset({3, 4}), b=b),
        OscarPreSpec(graph=oscar),
    )


def grover2_public(b: int = 4) -> PublicInfo:
    return public_info_for(grover2_graph(), b)


def lazy7_graph() -> OpenGraph:
    return OpenGraph(
        vertices=frozenset(range(1, 8)),
        edges=frozenset([(1, 3), (2, 3), (2, 4), (4, 6), (4, 5), (3, 5),
                         (3, 7), (6, 7)]),
        inputs=frozenset({1, 2}),
        outputs=frozenset({5, 6, 7}),
    )


def lazy7_order() -> TotalOrder:
    return TotalOrder(tuple(range(1, 8)))


def lazy7_public(b: int = 4) -> PublicInfo:
    return public_info_for(lazy7_graph(), b, lazy7_order())


def placeholder_angles(public: PublicInfo, measured_only: bool = False) -> dict:
    """Deterministic placeholder angle map spanning the angle set."""
    g = public.graph
    nodes = sorted(g.measured) if measured_only else sorted(g.vertices)
    big = 1 << public.b
    return {n: DyadicAngle((3 * i + 1) % big, public.b)
            for i, n in enumerate(nodes)}


def grover2_scenario(b: int = 4) -> dict:
    """Scenario file contents for the joined two-client graph."""
    from .graphstate import graph_to_json

    pub = grover2_public(b)
    angles = placeholder_angles(pub)
    phi = {n: angles[n] for n in sorted(pub.graph.alice_nodes)}
    psi = {n: angles[n] for n in sorted(pub.graph.oscar_nodes - pub.graph.outputs)}
    return {
        "name": "grover2",
        "graph": graph_to_json(pub.graph, pub.order, b),
        "phi": {str(n): a.k for n, a in phi.items()},
        "psi": {str(n): a.k for n, a in psi.items()},
        "io_mode": "cc",
        "protocol": "boqc",
        "input_bits": {},
        "seeds": {"keys": 7, "alice": 11, "oscar": 13, "outcomes": 17},
    }


def lazy7_scenario(b: int = 4) -> dict:
    from .graphstate import graph_to_json

    pub = lazy7_public(b)
    angles = placeholder_angles(pub)
    return {
        "name": "lazy7",
        "graph": graph_to_json(pub.graph, pub.order, b),
        "phi": {str(n): a.k for n, a in angles.items()},
        "psi": {},
        "io_mode": "cc",
        "protocol": "boqco",
        "input_bits": {"1": 0, "2": 0},
        "seeds": {"keys": 7, "alice": 11, "oscar": 13, "outcomes": 17},
    }
