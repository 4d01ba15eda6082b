"""Open graphs, flow, orderings, lazy assignment sets and graph joining.

An open graph is the triple (G, I, O) plus the two-client bookkeeping that
the protocols need: which nodes belong to which client and which carry
quantum input/output.  A flow is a map f from measured to prepared nodes
together with a layering of the vertices that realises the induced partial
order; a total order is any linear extension of that layering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Optional

from ._util import node_sort_key as _node_key


class GraphError(ValueError):
    """Raised on open-graph invariant violations."""


class InvalidConnectionError(ValueError):
    """Raised when joining client graphs yields no flow or a bad wiring."""


def _norm_edge(i, j) -> tuple:
    if i == j:
        raise GraphError(f"self loop on node {i!r}")
    try:
        swap = j < i
    except TypeError:
        swap = repr(j) < repr(i)
    return (j, i) if swap else (i, j)


@dataclass(frozen=True)
class OpenGraph:
    """Simple graph with input/output sets and per-client node ownership."""

    vertices: frozenset
    edges: frozenset
    inputs: frozenset
    outputs: frozenset
    quantum_inputs: frozenset = frozenset()
    quantum_outputs: frozenset = frozenset()
    alice_nodes: frozenset = frozenset()
    oscar_nodes: frozenset = frozenset()

    def __post_init__(self) -> None:
        v = frozenset(self.vertices)
        e = frozenset(_norm_edge(*pair) for pair in self.edges)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)
        for f in ("inputs", "outputs", "quantum_inputs", "quantum_outputs",
                  "alice_nodes", "oscar_nodes"):
            object.__setattr__(self, f, frozenset(getattr(self, f)))
        if not self.alice_nodes and not self.oscar_nodes:
            object.__setattr__(self, "alice_nodes", v)
        self._validate()

    def _validate(self) -> None:
        for i, j in self.edges:
            if i not in self.vertices or j not in self.vertices:
                raise GraphError(f"edge ({i!r},{j!r}) leaves the vertex set")
        if not self.inputs or not self.outputs:
            raise GraphError("inputs and outputs must both be non-empty")
        if not self.inputs <= self.vertices or not self.outputs <= self.vertices:
            raise GraphError("inputs/outputs must be vertices")
        if not self.quantum_inputs <= self.inputs:
            raise GraphError("quantum inputs must be a subset of inputs")
        if not self.quantum_outputs <= self.outputs:
            raise GraphError("quantum outputs must be a subset of outputs")
        if self.alice_nodes | self.oscar_nodes != self.vertices:
            raise GraphError("client node sets must cover all vertices")
        if self.alice_nodes & self.oscar_nodes:
            raise GraphError("client node sets must be disjoint")
        # The oracle client never holds quantum input or output (B4).
        if self.quantum_inputs & self.oscar_nodes:
            raise GraphError("oracle nodes cannot carry quantum input")
        if self.quantum_outputs & self.oscar_nodes:
            raise GraphError("oracle nodes cannot carry quantum output")

    # -- basic queries ----------------------------------------------------

    def neighbors(self, node) -> frozenset:
        if node not in self.vertices:
            raise GraphError(f"unknown node {node!r}")
        return frozenset(
            j if i == node else i for i, j in self.edges if node in (i, j)
        )

    def closed_neighborhood(self, node) -> frozenset:
        return self.neighbors(node) | {node}

    @property
    def measured(self) -> frozenset:
        """O^c, the nodes consumed by measurements."""
        return self.vertices - self.outputs

    @property
    def prepared(self) -> frozenset:
        """I^c, the nodes created during the run."""
        return self.vertices - self.inputs

    def sorted_vertices(self) -> list:
        return sorted(self.vertices, key=_node_key)


@dataclass(frozen=True)
class Flow:
    """Correction map f on O^c plus the partial order as a layering.

    ``layers`` lists disjoint node sets in measurement order (earliest
    first) and covers every vertex exactly once.
    """

    f: Mapping
    layers: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "f", dict(self.f))
        object.__setattr__(
            self, "layers", tuple(frozenset(layer) for layer in self.layers)
        )

    def layer_index(self) -> dict:
        idx = {}
        for depth, layer in enumerate(self.layers):
            for node in layer:
                idx[node] = depth
        return idx

    def inverse(self) -> dict:
        return {v: k for k, v in self.f.items()}


@dataclass(frozen=True)
class TotalOrder:
    """A linearization of the flow's partial order over all vertices."""

    sequence: tuple

    def __post_init__(self) -> None:
        seq = tuple(self.sequence)
        if len(set(seq)) != len(seq):
            raise GraphError("total order repeats a node")
        object.__setattr__(self, "sequence", seq)

    def position(self) -> dict:
        return {node: i for i, node in enumerate(self.sequence)}

    def before(self, a, b) -> bool:
        pos = self.position()
        return pos[a] < pos[b]

    def __iter__(self):
        return iter(self.sequence)

    def __len__(self) -> int:
        return len(self.sequence)


# -- flow verification and search -----------------------------------------


def verify_flow(g: OpenGraph, fl: Flow) -> bool:
    """Check (F0)-(F2) against the layering, plus domain and cover sanity."""
    oc = g.measured
    if set(fl.f.keys()) != oc:
        return False
    if not set(fl.f.values()) <= g.prepared:
        return False
    covered = [node for layer in fl.layers for node in layer]
    if len(covered) != len(g.vertices) or set(covered) != g.vertices:
        return False
    depth = fl.layer_index()
    for j in oc:
        fj = fl.f[j]
        if fj == j or _norm_edge(j, fj) not in g.edges:   # (F0)
            return False
        if depth[fj] <= depth[j]:                   # (F1)
            return False
        for k in g.neighbors(fj) - {j}:             # (F2)
            if depth[k] <= depth[j]:
                return False
    return True


def find_flow(g: OpenGraph) -> Optional[Flow]:
    """Deterministic causal-flow search by peeling correction candidates.

    Walks backwards from the outputs: a node v still unassigned as a
    corrector may correct u when u is v's only neighbour outside the
    processed set, which is forced by (F2).  Returns None when the
    process stalls before covering the graph.
    """
    vertices = set(g.vertices)
    processed = set(g.outputs)
    candidates = set(g.outputs - g.inputs)
    f: dict = {}
    rev_layers: list = [frozenset(g.outputs)]

    while processed != vertices:
        assigned = []
        used = []
        for v in sorted(candidates, key=_node_key):
            pending = g.neighbors(v) - processed
            if len(pending) == 1:
                (u,) = pending
                if u in (x for x, _ in assigned):
                    continue
                assigned.append((u, v))
                used.append(v)
        if not assigned:
            return None
        layer = set()
        for u, v in assigned:
            f[u] = v
            layer.add(u)
        processed |= layer
        candidates -= set(used)
        candidates |= layer - g.inputs
        rev_layers.append(frozenset(layer))

    return Flow(f, tuple(reversed(rev_layers)))


def brute_force_flow(g: OpenGraph, node_limit: int = 8) -> Optional[Flow]:
    """Exhaustive flow search, the test oracle for ``find_flow``.

    Tries every injective f with (j, f(j)) an edge and f(j) not an input,
    and accepts the first whose (F1)/(F2) constraint digraph is acyclic.
    Exponential; capped to small graphs.
    """
    if len(g.vertices) > node_limit:
        raise ValueError(f"brute force capped at {node_limit} nodes")
    oc = sorted(g.measured, key=_node_key)
    ic = g.prepared

    def constraint_edges(f: dict) -> list:
        out = []
        for j, fj in f.items():
            out.append((j, fj))
            for k in g.neighbors(fj) - {j}:
                out.append((j, k))
        return out

    def layering_of(f: dict) -> Optional[list]:
        # Longest-path layering of the constraint digraph; None on a cycle.
        succ: dict = {v: set() for v in g.vertices}
        indeg = {v: 0 for v in g.vertices}
        for a, b in constraint_edges(f):
            if b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
        depth = {v: 0 for v in g.vertices}
        queue = [v for v in g.vertices if indeg[v] == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for w in succ[v]:
                depth[w] = max(depth[w], depth[v] + 1)
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        if seen != len(g.vertices):
            return None
        nlayers = max(depth.values()) + 1 if depth else 1
        layers = [set() for _ in range(nlayers)]
        for v, d in depth.items():
            layers[d].add(v)
        return layers

    def search(idx: int, f: dict, taken: set) -> Optional[Flow]:
        if idx == len(oc):
            layers = layering_of(f)
            if layers is None:
                return None
            fl = Flow(f, tuple(frozenset(s) for s in layers))
            return fl if verify_flow(g, fl) else None
        j = oc[idx]
        for v in sorted(g.neighbors(j) & ic, key=_node_key):
            if v in taken:
                continue
            found = search(idx + 1, {**f, j: v}, taken | {v})
            if found is not None:
                return found
        return None

    return search(0, {}, set())


def linearize(fl: Flow, tie_break=None) -> TotalOrder:
    """Flatten layers into a total order; ties broken by ascending node id."""
    key = tie_break if tie_break is not None else _node_key
    seq: list = []
    for layer in fl.layers:
        seq.extend(sorted(layer, key=key))
    return TotalOrder(tuple(seq))


def assignment_set(g: OpenGraph, order: TotalOrder, i) -> frozenset:
    """Fresh qubits prepared right before measuring i in the lazy schedule.

    A(i) = N[i] minus the inputs and everything assigned at earlier steps.
    """
    if i not in g.vertices:
        raise GraphError(f"unknown node {i!r}")
    pos = order.position()
    assigned = set(g.inputs)
    for j in order:
        if pos[j] >= pos[i]:
            break
        assigned |= g.closed_neighborhood(j)
    return frozenset(g.closed_neighborhood(i) - assigned)


def assignment_sets(g: OpenGraph, order: TotalOrder) -> dict:
    """All A(i) in one sweep over the total order."""
    assigned = set(g.inputs)
    out = {}
    for i in order:
        fresh = g.closed_neighborhood(i) - assigned
        out[i] = frozenset(fresh)
        assigned |= fresh
    return out


# -- pre-protocol graph joining --------------------------------------------


@dataclass(frozen=True)
class Slot:
    """Oracle placeholder in the main client's graph: the nodes on her side
    that the oracle component must attach to."""

    attach: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "attach", frozenset(self.attach))


@dataclass(frozen=True)
class ClientGraphSpec:
    """One client's fragment before joining."""

    vertices: frozenset
    edges: frozenset
    slots: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        object.__setattr__(
            self, "edges", frozenset(_norm_edge(*e) for e in self.edges)
        )
        object.__setattr__(self, "slots", tuple(self.slots))

    def components(self) -> list:
        remaining = set(self.vertices)
        adj: dict = {v: set() for v in self.vertices}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        comps = []
        while remaining:
            start = min(remaining, key=_node_key)
            stack, comp = [start], set()
            while stack:
                v = stack.pop()
                if v in comp:
                    continue
                comp.add(v)
                stack.extend(adj[v] - comp)
            comps.append(frozenset(comp))
            remaining -= comp
        return sorted(comps, key=lambda c: _node_key(min(c, key=_node_key)))


def join_graphs(
    alice: ClientGraphSpec,
    oscar: ClientGraphSpec,
    connection: Iterable[tuple],
    *,
    inputs: Iterable,
    outputs: Iterable,
    quantum_inputs: Iterable = (),
    quantum_outputs: Iterable = (),
) -> tuple[OpenGraph, Flow]:
    """Join the two fragments along ``connection`` and demand a flow.

    Each pair in the connection is (oracle node, main-client node); every
    slot's attachment points must be wired to exactly one oracle
    component, and distinct slots to distinct components.  The join is
    valid only when the combined graph has flow.
    """
    connection = [tuple(pair) for pair in connection]
    if alice.vertices & oscar.vertices:
        raise InvalidConnectionError("client vertex sets overlap")
    comps = oscar.components()
    if len(comps) != len(alice.slots):
        raise InvalidConnectionError(
            f"{len(alice.slots)} slots but {len(comps)} oracle components"
        )
    for o_node, a_node in connection:
        if o_node not in oscar.vertices or a_node not in alice.vertices:
            raise InvalidConnectionError(
                f"connection pair ({o_node!r},{a_node!r}) off the fragments"
            )
    slot_of_attach = {}
    for s_idx, slot in enumerate(alice.slots):
        for a in slot.attach:
            slot_of_attach[a] = s_idx
    comp_of: dict = {}
    covered: dict = {i: set() for i in range(len(alice.slots))}
    for o_node, a_node in connection:
        if a_node not in slot_of_attach:
            raise InvalidConnectionError(
                f"{a_node!r} is not a slot attachment point"
            )
        s_idx = slot_of_attach[a_node]
        c_idx = next(i for i, c in enumerate(comps) if o_node in c)
        if comp_of.setdefault(s_idx, c_idx) != c_idx:
            raise InvalidConnectionError(
                f"slot {s_idx} wired to two oracle components"
            )
        covered[s_idx].add(a_node)
    for s_idx, slot in enumerate(alice.slots):
        if covered[s_idx] != set(slot.attach):
            raise InvalidConnectionError(
                f"slot {s_idx} attachments not fully wired"
            )
    if len(set(comp_of.values())) != len(comp_of):
        raise InvalidConnectionError("two slots share an oracle component")

    joined = OpenGraph(
        vertices=alice.vertices | oscar.vertices,
        edges=alice.edges | oscar.edges | frozenset(
            _norm_edge(*pair) for pair in connection
        ),
        inputs=frozenset(inputs),
        outputs=frozenset(outputs),
        quantum_inputs=frozenset(quantum_inputs),
        quantum_outputs=frozenset(quantum_outputs),
        alice_nodes=alice.vertices,
        oscar_nodes=oscar.vertices,
    )
    fl = find_flow(joined)
    if fl is None:
        raise InvalidConnectionError("joined graph has no flow")
    return joined, fl


# -- JSON ------------------------------------------------------------------


def graph_to_json(g: OpenGraph, order: Optional[TotalOrder] = None,
                  b: Optional[int] = None) -> dict:
    obj = {
        "vertices": sorted(g.vertices),
        "edges": sorted([list(e) for e in g.edges]),
        "I": sorted(g.inputs),
        "O": sorted(g.outputs),
        "tilde_I": sorted(g.quantum_inputs),
        "tilde_O": sorted(g.quantum_outputs),
        "V_A": sorted(g.alice_nodes),
        "V_O": sorted(g.oscar_nodes),
    }
    if order is not None:
        obj["total_order"] = list(order.sequence)
    if b is not None:
        obj["b"] = b
    return obj


def graph_from_json(obj: dict) -> tuple[OpenGraph, Optional[TotalOrder], Optional[int]]:
    g = OpenGraph(
        vertices=frozenset(obj["vertices"]),
        edges=frozenset(tuple(e) for e in obj["edges"]),
        inputs=frozenset(obj["I"]),
        outputs=frozenset(obj["O"]),
        quantum_inputs=frozenset(obj.get("tilde_I", [])),
        quantum_outputs=frozenset(obj.get("tilde_O", [])),
        alice_nodes=frozenset(obj.get("V_A", [])),
        oscar_nodes=frozenset(obj.get("V_O", [])),
    )
    order = None
    if "total_order" in obj and obj["total_order"]:
        order = TotalOrder(tuple(obj["total_order"]))
    return g, order, obj.get("b")


def load_graph(path) -> tuple[OpenGraph, Optional[TotalOrder], Optional[int]]:
    with open(path) as fh:
        return graph_from_json(json.load(fh))


# -- random instances for property tests and batch reports -----------------


def random_open_graph(rng, n: int, edge_prob: float = 0.35):
    """A random simple graph with random disjoint I and O."""
    nodes = list(range(1, n + 1))
    edges = set()
    for i, j in combinations(nodes, 2):
        if rng.random() < edge_prob:
            edges.add((i, j))
    n_in = int(rng.integers(1, max(2, n // 2 + 1)))
    n_out = int(rng.integers(1, max(2, n // 2 + 1)))
    perm = list(rng.permutation(nodes))
    inputs = frozenset(perm[:n_in])
    outputs = frozenset(perm[n_in:n_in + n_out])
    if not outputs:
        outputs = frozenset(perm[-1:])
    return OpenGraph(frozenset(nodes), frozenset(edges), inputs, outputs)


def random_flow_graph(rng, n: int, edge_prob: float = 0.35,
                      max_tries: int = 2000) -> tuple[OpenGraph, Flow]:
    """Rejection-sample open graphs until one has flow."""
    for _ in range(max_tries):
        g = random_open_graph(rng, n, edge_prob)
        fl = find_flow(g)
        if fl is not None and len(g.measured) > 0:
            return g, fl
    raise RuntimeError("no flow graph found; relax the parameters")
