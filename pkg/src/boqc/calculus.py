"""Measurement patterns: builders, execution, channels and qubit accounting.

A pattern is an ordered command list over named qubits.  Three builders
cover the forms the equivalence results reason about: the standard flow
pattern (corrections absorbed into measurement dependencies, explicit
byproducts only on outputs), the pre-correction form (explicit conditional
Paulis right before each measurement), and the lazy form (preparation and
entangling interleaved with measurements so only a neighborhood is live).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .angles import DyadicAngle, correct_angle
from .graphstate import Flow, OpenGraph, TotalOrder, assignment_sets, linearize, verify_flow
from ._util import node_sort_key as _node_sort_key
from .qsim import DensityMatrix, ForcedOutcomes, QuantumRegister


class PatternError(ValueError):
    """Raised when a pattern violates runnability or its build inputs."""


class SizeError(ValueError):
    """Raised when an exact enumeration would exceed the configured cap."""


MAX_BRANCH_NODES = 14


# -- commands ----------------------------------------------------------------


@dataclass(frozen=True)
class Prepare:
    node: object
    angle: DyadicAngle


@dataclass(frozen=True)
class Entangle:
    a: object
    b: object


@dataclass(frozen=True)
class Measure:
    node: object
    angle: DyadicAngle
    x_signals: frozenset = frozenset()
    z_signals: frozenset = frozenset()


@dataclass(frozen=True)
class CorrectX:
    node: object
    signals: frozenset


@dataclass(frozen=True)
class CorrectZ:
    node: object
    signals: frozenset


Command = Union[Prepare, Entangle, Measure, CorrectX, CorrectZ]


@dataclass(frozen=True)
class Pattern:
    commands: tuple
    inputs: frozenset
    outputs: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "commands", tuple(self.commands))
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))

    def measured_nodes(self) -> list:
        return [c.node for c in self.commands if isinstance(c, Measure)]

    def all_nodes(self) -> frozenset:
        nodes = set(self.inputs) | set(self.outputs)
        for c in self.commands:
            if isinstance(c, Entangle):
                nodes |= {c.a, c.b}
            else:
                nodes.add(c.node)
        return frozenset(nodes)

    def to_json(self) -> list:
        out = []
        for c in self.commands:
            if isinstance(c, Prepare):
                out.append({"cmd": "N", "node": c.node, "angle": c.angle.to_json()})
            elif isinstance(c, Entangle):
                out.append({"cmd": "E", "nodes": [c.a, c.b]})
            elif isinstance(c, Measure):
                out.append({
                    "cmd": "M", "node": c.node, "angle": c.angle.to_json(),
                    "x_signals": sorted(c.x_signals, key=_node_sort_key),
                    "z_signals": sorted(c.z_signals, key=_node_sort_key),
                })
            elif isinstance(c, CorrectX):
                out.append({"cmd": "X", "node": c.node,
                            "signals": sorted(c.signals, key=_node_sort_key)})
            elif isinstance(c, CorrectZ):
                out.append({"cmd": "Z", "node": c.node,
                            "signals": sorted(c.signals, key=_node_sort_key)})
        return out


# -- dependency structure ----------------------------------------------------


def x_signal_set(g: OpenGraph, flow: Flow, i) -> frozenset:
    """Nodes whose outcome X-corrects i: the flow preimage, none for inputs."""
    if i in g.inputs:
        return frozenset()
    inv = flow.inverse()
    return frozenset({inv[i]}) if i in inv else frozenset()


def z_signal_set(g: OpenGraph, flow: Flow, i) -> frozenset:
    """Nodes k measured before i whose correction Z-hits i: i in N(f(k))."""
    out = set()
    for k, fk in flow.f.items():
        if k != i and i in g.neighbors(fk):
            out.add(k)
    return frozenset(out)


def _check_build(g: OpenGraph, flow: Flow, theta: Mapping) -> None:
    if not verify_flow(g, flow):
        raise PatternError("flow does not satisfy the flow conditions")
    missing = g.measured - set(theta)
    if missing:
        raise PatternError(f"missing angles for {sorted(missing, key=_node_sort_key)}")


def _ordered(g: OpenGraph, flow: Flow, order: Optional[TotalOrder]) -> TotalOrder:
    if order is None:
        return linearize(flow)
    check_order_consistent(flow, order)
    return order


def check_order_consistent(flow: Flow, order: TotalOrder) -> None:
    pos = order.position()
    depth = flow.layer_index()
    for v in depth:
        if v not in pos:
            raise PatternError(f"total order misses node {v!r}")
    for v, dv in depth.items():
        for w, dw in depth.items():
            if dv < dw and pos[v] > pos[w]:
                raise PatternError(
                    f"total order puts {w!r} before {v!r} against the layering"
                )


# -- builders ----------------------------------------------------------------


def build_standard_pattern(g: OpenGraph, flow: Flow, theta: Mapping,
                           order: Optional[TotalOrder] = None) -> Pattern:
    """All-at-once pattern: prepare I^c, entangle E(G), measure O^c in order.

    Corrections onto nodes that are later measured ride along as the
    measurement's signal dependencies; outputs keep explicit byproducts.
    """
    _check_build(g, flow, theta)
    order = _ordered(g, flow, order)
    pos = order.position()
    cmds: list = []
    zero = DyadicAngle.zero(next(iter(theta.values())).b) if theta else None
    for j in sorted(g.prepared, key=lambda n: pos[n]):
        cmds.append(Prepare(j, zero))
    for a, b in sorted(g.edges, key=lambda e: (pos[e[0]], pos[e[1]])):
        cmds.append(Entangle(a, b))
    for i in order:
        if i in g.outputs:
            continue
        cmds.append(Measure(i, theta[i],
                            x_signal_set(g, flow, i), z_signal_set(g, flow, i)))
    cmds.extend(_output_corrections(g, flow, order))
    return Pattern(tuple(cmds), g.inputs, g.outputs)


def build_p2_pattern(g: OpenGraph, flow: Flow, theta: Mapping,
                     order: Optional[TotalOrder] = None) -> Pattern:
    """Pre-correction form: explicit conditional Paulis before each measurement."""
    _check_build(g, flow, theta)
    order = _ordered(g, flow, order)
    pos = order.position()
    cmds: list = []
    zero = DyadicAngle.zero(next(iter(theta.values())).b) if theta else None
    for j in sorted(g.prepared, key=lambda n: pos[n]):
        cmds.append(Prepare(j, zero))
    for a, b in sorted(g.edges, key=lambda e: (pos[e[0]], pos[e[1]])):
        cmds.append(Entangle(a, b))
    for i in order:
        if i in g.outputs:
            continue
        zs = z_signal_set(g, flow, i)
        xs = x_signal_set(g, flow, i)
        if zs:
            cmds.append(CorrectZ(i, zs))
        if xs:
            cmds.append(CorrectX(i, xs))
        cmds.append(Measure(i, theta[i]))
    cmds.extend(_output_corrections(g, flow, order))
    return Pattern(tuple(cmds), g.inputs, g.outputs)


def build_lazy_pattern(g: OpenGraph, flow: Flow, order: TotalOrder,
                       theta: Mapping) -> Pattern:
    """Just-in-time pattern: per node, prepare A(i), entangle forward, act.

    Non-outputs are measured at their turn; outputs receive their byproduct
    corrections at their turn instead.
    """
    _check_build(g, flow, theta)
    order = _ordered(g, flow, order)
    pos = order.position()
    asets = assignment_sets(g, order)
    zero = DyadicAngle.zero(next(iter(theta.values())).b) if theta else None
    cmds: list = []
    for i in order:
        for k in sorted(asets[i], key=lambda n: pos[n]):
            cmds.append(Prepare(k, zero))
        for k in sorted(g.neighbors(i), key=lambda n: pos[n]):
            if pos[k] > pos[i]:
                cmds.append(Entangle(i, k))
        if i in g.outputs:
            zs = z_signal_set(g, flow, i)
            xs = x_signal_set(g, flow, i)
            if zs:
                cmds.append(CorrectZ(i, zs))
            if xs:
                cmds.append(CorrectX(i, xs))
        else:
            cmds.append(Measure(i, theta[i],
                                x_signal_set(g, flow, i), z_signal_set(g, flow, i)))
    return Pattern(tuple(cmds), g.inputs, g.outputs)


def _output_corrections(g: OpenGraph, flow: Flow, order: TotalOrder) -> list:
    pos = order.position()
    cmds = []
    for o in sorted(g.outputs, key=lambda n: pos[n]):
        zs = z_signal_set(g, flow, o)
        xs = x_signal_set(g, flow, o)
        if zs:
            cmds.append(CorrectZ(o, zs))
        if xs:
            cmds.append(CorrectX(o, xs))
    return cmds


# -- runnability ---------------------------------------------------------------


def runnability_check(pattern: Pattern) -> list:
    """Return the list of (R0)-(R2) violations; empty means runnable."""
    problems = []
    live = set(pattern.inputs)
    prepared: set = set()
    measured: set = set()

    def need_live(node, what):
        if node in measured:
            problems.append(f"{what} acts on measured node {node!r}")
        elif node not in live:
            problems.append(f"{what} acts on unprepared node {node!r}")

    def need_signals(signals, what):
        bad = set(signals) - measured
        if bad:
            problems.append(
                f"{what} depends on unmeasured {sorted(bad, key=_node_sort_key)}"
            )

    for c in pattern.commands:
        if isinstance(c, Prepare):
            if c.node in pattern.inputs:
                problems.append(f"prepare on input node {c.node!r}")
            if c.node in live or c.node in measured:
                problems.append(f"prepare on existing node {c.node!r}")
            live.add(c.node)
            prepared.add(c.node)
        elif isinstance(c, Entangle):
            need_live(c.a, "entangle")
            need_live(c.b, "entangle")
        elif isinstance(c, Measure):
            need_live(c.node, "measure")
            need_signals(c.x_signals | c.z_signals, f"measure {c.node!r}")
            if c.node in pattern.outputs:
                problems.append(f"measure on output node {c.node!r}")
            live.discard(c.node)
            measured.add(c.node)
        else:
            need_live(c.node, "correction")
            need_signals(c.signals, f"correction on {c.node!r}")

    nodes = pattern.all_nodes()
    if measured != nodes - pattern.outputs:
        problems.append("measured set is not exactly the non-outputs")
    if prepared != nodes - pattern.inputs:
        problems.append("prepared set is not exactly the non-inputs")
    return problems


# -- execution -----------------------------------------------------------------


@dataclass
class PatternResult:
    register: QuantumRegister
    signals: dict
    probability: float

    def output_state(self, outputs: Sequence) -> np.ndarray:
        return self.register.statevector(list(outputs))


def _input_register(pattern: Pattern, input_state) -> QuantumRegister:
    inputs = sorted(pattern.inputs, key=_node_sort_key)
    if isinstance(input_state, QuantumRegister):
        reg = input_state.copy()
        missing = set(inputs) - set(reg.nodes)
        if missing:
            raise PatternError(f"input register misses {sorted(missing, key=_node_sort_key)}")
        return reg
    reg = QuantumRegister()
    if input_state is None:
        raise PatternError("pattern has inputs; an input state is required")
    vec = np.asarray(input_state, dtype=np.complex128).reshape(-1)
    reg.alloc_state(inputs, vec)
    return reg


def run_pattern(pattern: Pattern, input_state=None,
                outcome_source=None) -> PatternResult:
    """Execute the commands in order on a fresh register.

    Adaptive measurement angles are evaluated at measurement time from the
    recorded signals.  Rejects non-runnable patterns up front.
    """
    problems = runnability_check(pattern)
    if problems:
        raise PatternError("pattern is not runnable: " + "; ".join(problems))
    if outcome_source is None:
        outcome_source = ForcedOutcomes({n: 0 for n in pattern.measured_nodes()})
    reg = _input_register(pattern, input_state)
    signals: dict = {}
    probability = 1.0
    for c in pattern.commands:
        if isinstance(c, Prepare):
            reg.alloc_plus(c.node, c.angle if c.angle is not None else 0.0)
        elif isinstance(c, Entangle):
            reg.apply_cz(c.a, c.b)
        elif isinstance(c, Measure):
            sx = _parity(signals, c.x_signals)
            sz = _parity(signals, c.z_signals)
            res = reg.measure_angle(c.node, correct_angle(c.angle, sx, sz),
                                    outcome_source)
            signals[c.node] = res.outcome
            probability *= res.probability
        elif isinstance(c, CorrectX):
            if _parity(signals, c.signals):
                reg.apply_x(c.node)
        elif isinstance(c, CorrectZ):
            if _parity(signals, c.signals):
                reg.apply_z(c.node)
    return PatternResult(reg, signals, probability)


def _parity(signals: Mapping, nodes) -> int:
    p = 0
    for n in nodes:
        p ^= signals[n]
    return p


# -- channels and isometries -----------------------------------------------------


def _pure_components(pattern: Pattern, rho_in) -> list:
    """Decompose the input into weighted pure states over sorted inputs."""
    inputs = sorted(pattern.inputs, key=_node_sort_key)
    dim = 1 << len(inputs)
    if rho_in is None:
        raise PatternError("channel needs an input state")
    if isinstance(rho_in, DensityMatrix):
        mat = rho_in.permuted(tuple(inputs)).matrix
        vals, vecs = np.linalg.eigh(mat)
        return [(float(v), vecs[:, i]) for i, v in enumerate(vals) if v > 1e-14]
    vec = np.asarray(rho_in, dtype=np.complex128).reshape(-1)
    if vec.size != dim:
        raise PatternError("input state dimension mismatch")
    return [(1.0, vec)]


def channel_of_pattern(pattern: Pattern, rho_in=None,
                       max_branch_nodes: int = MAX_BRANCH_NODES) -> DensityMatrix:
    """Exact channel output: sum over all outcome branches of the weighted
    output density matrices."""
    measured = pattern.measured_nodes()
    if len(measured) > max_branch_nodes:
        raise SizeError(
            f"{len(measured)} measured nodes exceed the {max_branch_nodes}-node "
            "branch enumeration cap"
        )
    outputs = sorted(pattern.outputs, key=_node_sort_key)
    dim = 1 << len(outputs)
    acc = np.zeros((dim, dim), dtype=np.complex128)
    total = 0.0
    for weight, vec in _pure_components(pattern, rho_in):
        for branch in range(1 << len(measured)):
            forced = ForcedOutcomes(
                {n: (branch >> k) & 1 for k, n in enumerate(measured)}
            )
            res = run_pattern(pattern, vec, forced)
            if res.probability <= 1e-300:
                continue
            out = res.output_state(outputs)
            acc += weight * res.probability * np.outer(out, out.conj())
            total += weight * res.probability
    if abs(total - 1.0) > 1e-9:
        raise PatternError(f"branch probabilities sum to {total}, not 1")
    return DensityMatrix(tuple(outputs), acc)


def isometry_matrix(g: OpenGraph, theta: Mapping,
                    node_limit: int = 20) -> np.ndarray:
    """The map the flow pattern realizes, as a 2^|O| x 2^|I| matrix.

    Built column by column from <+_theta| E_G N^0 and rescaled by
    2^(|O^c|/2) so the result V satisfies V^dag V = 1.
    """
    if len(g.vertices) > node_limit:
        raise SizeError(f"isometry capped at {node_limit} nodes")
    inputs = sorted(g.inputs, key=_node_sort_key)
    outputs = sorted(g.outputs, key=_node_sort_key)
    oc = sorted(g.measured, key=_node_sort_key)
    scale = 2.0 ** (len(oc) / 2.0)
    cols = []
    for x in range(1 << len(inputs)):
        reg = QuantumRegister()
        for k, node in enumerate(inputs):
            reg.alloc_computational(node, (x >> (len(inputs) - 1 - k)) & 1)
        for node in sorted(g.prepared, key=_node_sort_key):
            reg.alloc_plus(node, 0.0)
        for a, b in sorted(g.edges, key=lambda e: (_node_sort_key(e[0]), _node_sort_key(e[1]))):
            reg.apply_cz(a, b)
        for node in oc:
            reg.project_plus_bra(node, theta[node])
        cols.append(scale * reg.statevector(outputs))
    return np.stack(cols, axis=1)


# -- qubit accounting -------------------------------------------------------------


def live_qubit_profile(pattern: Pattern) -> list:
    """Live-qubit count after every command, starting from the inputs."""
    count = len(pattern.inputs)
    profile = [count]
    for c in pattern.commands:
        if isinstance(c, Prepare):
            count += 1
        elif isinstance(c, Measure):
            count -= 1
        profile.append(count)
    return profile


def max_concurrent_qubits(pattern: Pattern) -> int:
    """Peak number of simultaneously live qubits under the pattern's schedule."""
    return max(live_qubit_profile(pattern))
