import json

import numpy as np
import pytest

from boqc.graphstate import (
    ClientGraphSpec,
    Flow,
    GraphError,
    InvalidConnectionError,
    OpenGraph,
    Slot,
    TotalOrder,
    assignment_set,
    assignment_sets,
    brute_force_flow,
    find_flow,
    graph_from_json,
    graph_to_json,
    join_graphs,
    linearize,
    random_flow_graph,
    random_open_graph,
    verify_flow,
)

GROVER2_F = {1: 4, 2: 3, 5: 8, 6: 7, 7: 2, 8: 1}


def test_invariants_rejected():
    with pytest.raises(GraphError):
        OpenGraph(vertices={1}, edges={(1, 1)}, inputs={1}, outputs={1})
    with pytest.raises(GraphError):
        OpenGraph(vertices={1, 2}, edges=set(), inputs=set(), outputs={2})
    with pytest.raises(GraphError):
        OpenGraph(vertices={1, 2}, edges=set(), inputs={1}, outputs={3})
    # the oracle client never holds quantum input
    with pytest.raises(GraphError):
        OpenGraph(vertices={1, 2}, edges={(1, 2)}, inputs={1}, outputs={2},
                  quantum_inputs={1}, alice_nodes={2}, oscar_nodes={1})


def test_verify_flow_paper_layering(grover2):
    fl = Flow(GROVER2_F, ({5, 6}, {7, 8}, {1, 2}, {3}, {4}))
    assert verify_flow(grover2, fl)


def test_verify_flow_path(path_graph):
    fl = Flow({1: 2, 2: 3}, ({1}, {2}, {3}))
    assert verify_flow(path_graph, fl)
    bad = Flow({1: 3, 2: 3}, ({1}, {2}, {3}))
    assert not verify_flow(path_graph, bad)


def test_verify_flow_rejects_mutations(grover2):
    good = Flow(GROVER2_F, ({5, 6}, {7, 8}, {1, 2}, {3}, {4}))
    assert verify_flow(grover2, good)
    for j in GROVER2_F:
        for v in grover2.prepared:
            if v == GROVER2_F[j]:
                continue
            mutated = dict(GROVER2_F)
            mutated[j] = v
            assert not verify_flow(
                grover2, Flow(mutated, ({5, 6}, {7, 8}, {1, 2}, {3}, {4}))
            ), f"mutation {j}->{v} slipped through"


def test_find_flow_grover2(grover2):
    fl = find_flow(grover2)
    assert fl is not None
    assert fl.f == GROVER2_F
    assert verify_flow(grover2, fl)


def test_find_flow_path(path_graph):
    fl = find_flow(path_graph)
    assert fl.f == {1: 2, 2: 3}


def test_find_flow_degenerate_all_output():
    g = OpenGraph(vertices={1}, edges=set(), inputs={1}, outputs={1})
    fl = find_flow(g)
    assert fl is not None
    assert fl.f == {}
    assert fl.layers == (frozenset({1}),)
    assert verify_flow(g, fl)


def test_find_flow_none_when_impossible():
    # two measured nodes competing for a single corrector
    g = OpenGraph(vertices={1, 2, 3}, edges={(1, 3), (2, 3)},
                  inputs={1, 2}, outputs={3})
    assert find_flow(g) is None
    assert brute_force_flow(g) is None


def test_find_flow_agrees_with_brute_force():
    rng = np.random.default_rng(42)
    found = 0
    for _ in range(200):
        n = int(rng.integers(3, 9))
        g = random_open_graph(rng, n, edge_prob=float(rng.uniform(0.2, 0.6)))
        fast = find_flow(g)
        slow = brute_force_flow(g)
        assert (fast is None) == (slow is None)
        if fast is not None:
            assert verify_flow(g, fast)
            assert verify_flow(g, slow)
            found += 1
    assert found > 10  # the sample must actually exercise both outcomes


def test_linearize_grover2(grover2):
    fl = find_flow(grover2)
    assert linearize(fl).sequence == (5, 6, 7, 8, 1, 2, 3, 4)


def test_linearize_single_layer():
    fl = Flow({}, ({1, 2, 3},))
    assert linearize(fl).sequence == (1, 2, 3)


def test_linearize_lazy7(lazy7):
    fl = find_flow(lazy7)
    assert linearize(fl).sequence == (1, 2, 3, 4, 5, 6, 7)


def test_assignment_sets_lazy7(lazy7, lazy7_total_order):
    assert assignment_set(lazy7, lazy7_total_order, 1) == {3}
    assert assignment_set(lazy7, lazy7_total_order, 2) == {4}
    assert assignment_set(lazy7, lazy7_total_order, 3) == {5, 7}
    assert assignment_set(lazy7, lazy7_total_order, 4) == {6}
    for o in (5, 6, 7):
        assert assignment_set(lazy7, lazy7_total_order, o) == frozenset()


def test_assignment_set_unknown_node(lazy7, lazy7_total_order):
    with pytest.raises(GraphError):
        assignment_set(lazy7, lazy7_total_order, 99)


def _random_consistent_order(fl, rng):
    seq = []
    for layer in fl.layers:
        layer = list(layer)
        rng.shuffle(layer)
        seq.extend(layer)
    return TotalOrder(tuple(seq))


def test_assignment_partition_properties():
    # disjointness, f(i) membership, and the union covering I^c
    rng = np.random.default_rng(7)
    for _ in range(100):
        g, fl = random_flow_graph(rng, int(rng.integers(4, 13)))
        order = _random_consistent_order(fl, rng)
        asets = assignment_sets(g, order)
        seen = set()
        for i, aset in asets.items():
            assert not (aset & seen), "assignment sets overlap"
            seen |= aset
        for i in g.measured:
            assert fl.f[i] in asets[i]
        union = frozenset().union(*asets.values())
        assert union == g.prepared


def test_flow_injective_on_random_graphs():
    rng = np.random.default_rng(3)
    for _ in range(50):
        g, fl = random_flow_graph(rng, int(rng.integers(4, 11)))
        values = list(fl.f.values())
        assert len(values) == len(set(values))


def test_join_grover2(grover2):
    alice = ClientGraphSpec(vertices={1, 2, 3, 4},
                            edges={(2, 3), (1, 4), (3, 4)},
                            slots=(Slot({1, 2}),))
    oscar = ClientGraphSpec(vertices={5, 6, 7, 8},
                            edges={(5, 6), (6, 7), (5, 8)})
    joined, fl = join_graphs(alice, oscar, [(7, 2), (8, 1)],
                             inputs={5, 6}, outputs={3, 4})
    assert joined.vertices == grover2.vertices
    assert joined.edges == grover2.edges
    assert joined.alice_nodes == {1, 2, 3, 4}
    assert joined.oscar_nodes == {5, 6, 7, 8}
    assert fl.f == GROVER2_F


def test_join_zero_queries(path_graph):
    alice = ClientGraphSpec(vertices={1, 2, 3}, edges={(1, 2), (2, 3)})
    oscar = ClientGraphSpec(vertices=set(), edges=set())
    joined, _ = join_graphs(alice, oscar, [], inputs={1}, outputs={3})
    assert joined.vertices == path_graph.vertices
    assert joined.edges == path_graph.edges
    assert joined.oscar_nodes == frozenset()


def test_join_alternative_connection_decided_by_flow_oracle():
    # the swapped wiring is accepted iff an exhaustive flow search succeeds
    alice = ClientGraphSpec(vertices={1, 2, 3, 4},
                            edges={(2, 3), (1, 4), (3, 4)},
                            slots=(Slot({1, 2}),))
    oscar = ClientGraphSpec(vertices={5, 6, 7, 8},
                            edges={(5, 6), (6, 7), (5, 8)})
    candidate = OpenGraph(
        vertices=frozenset(range(1, 9)),
        edges=frozenset([(2, 3), (1, 4), (3, 4), (5, 6), (6, 7), (5, 8),
                         (7, 1), (8, 2)]),
        inputs={5, 6}, outputs={3, 4},
        alice_nodes={1, 2, 3, 4}, oscar_nodes={5, 6, 7, 8})
    oracle_says = brute_force_flow(candidate) is not None
    try:
        joined, fl = join_graphs(alice, oscar, [(7, 1), (8, 2)],
                                 inputs={5, 6}, outputs={3, 4})
        assert oracle_says
        assert verify_flow(joined, fl)
    except InvalidConnectionError:
        assert not oracle_says


def test_join_bad_wirings_rejected():
    alice = ClientGraphSpec(vertices={1, 2, 3, 4},
                            edges={(2, 3), (1, 4), (3, 4)},
                            slots=(Slot({1, 2}),))
    two_comp = ClientGraphSpec(vertices={5, 6, 7, 8}, edges={(5, 6), (7, 8)})
    with pytest.raises(InvalidConnectionError):
        join_graphs(alice, two_comp, [(7, 2), (8, 1)],
                    inputs={5, 6}, outputs={3, 4})
    oscar = ClientGraphSpec(vertices={5, 6, 7, 8},
                            edges={(5, 6), (6, 7), (5, 8)})
    with pytest.raises(InvalidConnectionError):
        join_graphs(alice, oscar, [(7, 3), (8, 1)],  # node 3 is not a slot point
                    inputs={5, 6}, outputs={3, 4})


def test_graph_json_roundtrip(grover2):
    fl = find_flow(grover2)
    obj = graph_to_json(grover2, linearize(fl), 4)
    text = json.dumps(obj)
    g2, order, b = graph_from_json(json.loads(text))
    assert g2 == grover2
    assert order.sequence == (5, 6, 7, 8, 1, 2, 3, 4)
    assert b == 4


def test_linearize_custom_tie_break(grover2):
    fl = find_flow(grover2)
    descending = linearize(fl, tie_break=lambda n: -n)
    assert descending.sequence == (6, 5, 8, 7, 2, 1, 4, 3)
