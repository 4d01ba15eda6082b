"""Three-party delegated-computation protocol over simulated channels.

The two clients (the main client and the oracle client) cooperate through
a pre-shared key only; the server receives blinded qubits and measurement
angles and reports outcomes.  One run is a deterministic event loop over
the party machines given explicit keys, pads and an outcome source, which
is what lets the security harness enumerate runs exhaustively.

The quantum channel is modeled by transferring ownership of named qubits
inside one shared register; a party may only touch qubits it owns.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from ._util import node_sort_key
from .angles import DyadicAngle, random_angle
from .calculus import z_signal_set
from .graphstate import (
    ClientGraphSpec,
    Flow,
    OpenGraph,
    TotalOrder,
    assignment_sets,
    find_flow,
    join_graphs,
    linearize,
)
from .qsim import QuantumRegister, SeededOutcomes


class ProtocolError(ValueError):
    """Raised on malformed protocol inputs or order violations."""


class IOMode(str, enum.Enum):
    CC = "cc"
    CQ = "cq"
    QC = "qc"
    QQ = "qq"

    @property
    def quantum_input(self) -> bool:
        return self in (IOMode.QC, IOMode.QQ)

    @property
    def quantum_output(self) -> bool:
        return self in (IOMode.CQ, IOMode.QQ)


# -- public information and pre-protocol ------------------------------------


@dataclass(frozen=True)
class PublicInfo:
    """Everything the server legitimately learns: the leak tuple."""

    graph: OpenGraph
    layers: tuple
    order: TotalOrder
    b: int

    def flow(self) -> Flow:
        fl = find_flow(self.graph)
        if fl is None:
            raise ProtocolError("public graph has no flow")
        return fl

    def to_json(self) -> dict:
        from .graphstate import graph_to_json

        obj = graph_to_json(self.graph, self.order, self.b)
        obj["layers"] = [sorted(l, key=node_sort_key) for l in self.layers]
        return obj


@dataclass(frozen=True)
class AlicePreSpec:
    """Main client's pre-protocol offer: her fragment with oracle slots,
    the proposed wiring, the I/O declaration and the angle precision."""

    graph: ClientGraphSpec
    connection: tuple
    inputs: frozenset
    outputs: frozenset
    quantum_inputs: frozenset = frozenset()
    quantum_outputs: frozenset = frozenset()
    b: int = 4


@dataclass(frozen=True)
class OscarPreSpec:
    """Oracle client's fragment; one component per slot."""

    graph: ClientGraphSpec


def pre_protocol(alice_spec: AlicePreSpec, oscar_spec: OscarPreSpec) -> PublicInfo:
    """Join the fragments, find the flow, linearize, assemble the leak."""
    joined, fl = join_graphs(
        alice_spec.graph,
        oscar_spec.graph,
        alice_spec.connection,
        inputs=alice_spec.inputs,
        outputs=alice_spec.outputs,
        quantum_inputs=alice_spec.quantum_inputs,
        quantum_outputs=alice_spec.quantum_outputs,
    )
    if alice_spec.b < 1:
        raise ProtocolError("precision b must be >= 1")
    return PublicInfo(joined, fl.layers, linearize(fl), alice_spec.b)


def public_info_for(graph: OpenGraph, b: int,
                    order: Optional[TotalOrder] = None) -> PublicInfo:
    """PublicInfo straight from a joined graph (no slot machinery)."""
    fl = find_flow(graph)
    if fl is None:
        raise ProtocolError("graph has no flow")
    return PublicInfo(graph, fl.layers, order if order is not None else linearize(fl), b)


# -- keys, messages, transcript ----------------------------------------------


@dataclass(frozen=True)
class Keys:
    """Outcome keys on the measured nodes, one-time-pad bits on the inputs."""

    r: dict
    t: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "r", {k: int(v) & 1 for k, v in self.r.items()})
        object.__setattr__(self, "t", {k: int(v) & 1 for k, v in self.t.items()})


@dataclass(frozen=True)
class QubitToBob:
    node: object


@dataclass(frozen=True)
class AngleToBob:
    node: object
    delta: DyadicAngle


@dataclass(frozen=True)
class OutcomeFromBob:
    node: object
    s_tilde: int
    recipient: str


@dataclass(frozen=True)
class OutputQubits:
    nodes: tuple


Message = Union[QubitToBob, AngleToBob, OutcomeFromBob, OutputQubits]


@dataclass(frozen=True)
class Entry:
    seq: int
    sender: str
    receiver: str
    message: Message


@dataclass
class Transcript:
    """Ordered record of everything that crossed the server's interface."""

    entries: list = field(default_factory=list)
    keys: Optional[Keys] = None
    deviations: list = field(default_factory=list)

    def record(self, sender: str, receiver: str, message: Message) -> None:
        self.entries.append(Entry(len(self.entries), sender, receiver, message))

    def note_deviation(self, text: str) -> None:
        self.deviations.append(text)

    def bob_view(self) -> list:
        """The wire as the server sees it; keys never appear here."""
        return [e for e in self.entries if "bob" in (e.sender, e.receiver)]

    def classical_signature(self) -> tuple:
        """Per-round classical values in order: used for view distributions."""
        sig = []
        for e in self.entries:
            m = e.message
            if isinstance(m, AngleToBob):
                sig.append(("delta", m.node, m.delta.k))
            elif isinstance(m, OutcomeFromBob) and e.receiver == "alice":
                sig.append(("stilde", m.node, m.s_tilde))
        return tuple(sig)

    def to_json(self) -> list:
        out = []
        for e in self.entries:
            m = e.message
            rec: dict = {"seq": e.seq, "from": e.sender, "to": e.receiver}
            if isinstance(m, QubitToBob):
                rec.update(type="qubit", node=m.node)
            elif isinstance(m, AngleToBob):
                rec.update(type="angle", node=m.node, delta=m.delta.to_json())
            elif isinstance(m, OutcomeFromBob):
                rec.update(type="outcome", node=m.node, s_tilde=m.s_tilde)
            elif isinstance(m, OutputQubits):
                rec.update(type="output_qubits", nodes=list(m.nodes))
            out.append(rec)
        return out


# -- shared register with ownership -------------------------------------------


class ChannelRegister:
    """Shared register plus an ownership table and live-qubit accounting."""

    def __init__(self):
        self.reg = QuantumRegister()
        self.owner: dict = {}
        self.peak_live = 0
        self._live = 0

    def _bump(self, delta: int) -> None:
        self._live += delta
        self.peak_live = max(self.peak_live, self._live)

    def alloc_plus(self, owner: str, node, angle) -> None:
        self.reg.alloc_plus(node, angle)
        self.owner[node] = owner
        self._bump(+1)

    def alloc_state(self, owner: str, nodes, vec) -> None:
        self.reg.alloc_state(nodes, vec)
        for n in nodes:
            self.owner[n] = owner
        self._bump(len(list(nodes)))

    def check_owner(self, party: str, node) -> None:
        if self.owner.get(node) != party:
            raise ProtocolError(
                f"{party} touched {node!r} owned by {self.owner.get(node)!r}"
            )

    def transfer(self, node, new_owner: str) -> None:
        if node not in self.owner:
            raise ProtocolError(f"transfer of unallocated node {node!r}")
        self.owner[node] = new_owner

    def drop(self, node) -> None:
        self.owner.pop(node, None)
        self._bump(-1)

    @property
    def live(self) -> int:
        return self._live


# -- server behaviors ----------------------------------------------------------


class BobContext:
    """Restricted handle the server behavior acts through."""

    def __init__(self, channel: ChannelRegister, outcome_source, transcript: Transcript):
        self._channel = channel
        self._outcomes = outcome_source
        self._transcript = transcript
        self.history: list = []
        self.measured: dict = {}
        self._last_probability = 1.0

    def holdings(self) -> list:
        return sorted(
            (n for n, o in self._channel.owner.items() if o == "bob"),
            key=node_sort_key,
        )

    def note(self, event) -> None:
        self.history.append(event)

    def alloc_plus(self, node, angle=0.0) -> None:
        self._channel.alloc_plus("bob", node, angle)

    def apply_cz(self, a, b) -> None:
        self._channel.check_owner("bob", a)
        self._channel.check_owner("bob", b)
        self._channel.reg.apply_cz(a, b)

    def apply_phase(self, node, angle) -> None:
        self._channel.check_owner("bob", node)
        self._channel.reg.apply_phase(node, angle)

    def peek(self, nodes):
        """Reduced state of owned qubits; harness-level introspection."""
        for n in nodes:
            self._channel.check_owner("bob", n)
        return self._channel.reg.reduced_density(list(nodes))

    def measure_at(self, node, angle) -> int:
        self._channel.check_owner("bob", node)
        res = self._channel.reg.measure_angle(node, angle, self._outcomes)
        self._channel.drop(node)
        self.measured[node] = res.outcome
        self._last_probability = res.probability
        return res.outcome


class HonestBob:
    """Follows the protocol: stores, entangles, measures at the commanded
    angle, reports truthfully."""

    name = "honest"

    def on_qubit(self, ctx: BobContext, node) -> None:
        ctx.note(("recv", node))

    def prepare_output(self, ctx: BobContext, node) -> None:
        ctx.alloc_plus(node, 0.0)

    def entangle(self, ctx: BobContext, edges) -> None:
        for a, b in edges:
            ctx.apply_cz(a, b)

    def measure(self, ctx: BobContext, node, delta: DyadicAngle) -> int:
        return ctx.measure_at(node, delta)

    def release_outputs(self, ctx: BobContext, nodes) -> None:
        ctx.note(("release", tuple(nodes)))


class CustomBob(HonestBob):
    """Hook-driven server; hooks default to the honest actions.

    ``measure_hook(ctx, node, delta) -> s_tilde`` decides what is done with
    the qubit and what is reported.  Honest phase structure is kept; any
    hook that skips the commanded measurement is logged as a deviation by
    the engine.
    """

    name = "custom"

    def __init__(self, on_qubit=None, measure_hook=None, prepare_output=None,
                 entangle_hook=None, release_hook=None, name="custom"):
        self._on_qubit = on_qubit
        self._measure = measure_hook
        self._prepare_output = prepare_output
        self._entangle = entangle_hook
        self._release = release_hook
        self.name = name

    def on_qubit(self, ctx, node):
        if self._on_qubit:
            self._on_qubit(ctx, node)
        else:
            super().on_qubit(ctx, node)

    def prepare_output(self, ctx, node):
        if self._prepare_output:
            self._prepare_output(ctx, node)
        else:
            super().prepare_output(ctx, node)

    def entangle(self, ctx, edges):
        if self._entangle:
            self._entangle(ctx, edges)
        else:
            super().entangle(ctx, edges)

    def measure(self, ctx, node, delta):
        if self._measure:
            return self._measure(ctx, node, delta)
        return super().measure(ctx, node, delta)

    def release_outputs(self, ctx, nodes):
        if self._release:
            self._release(ctx, nodes)
        else:
            super().release_outputs(ctx, nodes)


def bob_honest(public: PublicInfo) -> HonestBob:
    return HonestBob()


def bob_custom(**hooks) -> CustomBob:
    return CustomBob(**hooks)


@dataclass(frozen=True)
class BobBehavior:
    """Declarative server behaviors shared by the runner and the enumerator.

    ``angle_offset_halfturns``: measure at delta + offset*pi instead of delta.
    ``report``: "honest" reports the measured bit, "zero" always reports 0.
    """

    angle_offset_halfturns: int = 0
    report: str = "honest"
    name: str = "honest"

    def to_bob(self, b: int) -> HonestBob:
        if self.angle_offset_halfturns == 0 and self.report == "honest":
            return HonestBob()
        offset = DyadicAngle(self.angle_offset_halfturns * (1 << (b - 1)), b)

        def hook(ctx, node, delta):
            bit = ctx.measure_at(node, delta + offset)
            return bit if self.report == "honest" else 0

        return CustomBob(measure_hook=hook, name=self.name)


HONEST = BobBehavior(name="honest")
CONSTANT_ZERO = BobBehavior(report="zero", name="constant-zero")
ANGLE_OFFSET_PI = BobBehavior(angle_offset_halfturns=1, name="offset-pi")


# -- client inputs ---------------------------------------------------------------


@dataclass
class AliceInputs:
    """Angles for her measured nodes plus the computation input."""

    phi: dict
    input_state: Optional[np.ndarray] = None
    input_bits: Optional[dict] = None


@dataclass
class OscarInputs:
    psi: dict


@dataclass(frozen=True)
class Seeds:
    keys: int = 0
    alice: int = 1
    oscar: int = 2
    outcomes: int = 3


@dataclass
class ProtocolResult:
    output_state: Optional[np.ndarray]
    output_bits: Optional[dict]
    transcript: Transcript
    signals: dict
    probability: float
    peak_live_qubits: int
    output_nodes: tuple
    bob_private: dict = field(default_factory=dict)


# -- the engine -------------------------------------------------------------------


def _measured_nodes(g: OpenGraph, mode: IOMode, order: TotalOrder) -> list:
    pos = order.position()
    nodes = g.measured if mode.quantum_output else g.vertices
    return sorted(nodes, key=lambda n: pos[n])


def _validate_io(g: OpenGraph, mode: IOMode) -> None:
    want_qi = g.inputs if mode.quantum_input else frozenset()
    if g.quantum_inputs != want_qi:
        raise ProtocolError(
            f"mode {mode.value} clashes with the declared quantum inputs")
    want_qo = g.outputs if mode.quantum_output else frozenset()
    if g.quantum_outputs != want_qo:
        raise ProtocolError(
            f"mode {mode.value} clashes with the declared quantum outputs")
    if mode.quantum_input:
        if g.inputs & g.oscar_nodes:
            raise ProtocolError("quantum input impossible: inputs on oracle nodes")
        if g.inputs & g.outputs:
            raise ProtocolError("quantum input with overlapping I and O is unsupported")
    if mode.quantum_output and g.outputs & g.oscar_nodes:
        raise ProtocolError("quantum output impossible: outputs on oracle nodes")


def _draw_keys(g: OpenGraph, mode: IOMode, order: TotalOrder, seed: int) -> Keys:
    rng = np.random.default_rng(seed)
    measured = _measured_nodes(g, mode, order)
    r = {i: int(rng.integers(0, 2)) for i in measured}
    t = {}
    if mode.quantum_input:
        t = {i: int(rng.integers(0, 2)) for i in sorted(g.inputs, key=node_sort_key)}
    return Keys(r, t)


def _draw_pads(nodes, b: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {n: random_angle(rng, b) for n in nodes}


class _Client:
    """Shared decode/angle bookkeeping for both clients."""

    def __init__(self, name: str, g: OpenGraph, flow: Flow, theta: Mapping,
                 keys: Keys, pads: Mapping):
        self.name = name
        self.g = g
        self.flow = flow
        self.finv = flow.inverse()
        self.theta = dict(theta)
        self.keys = keys
        self.pads = dict(pads)
        self.s: dict = {}

    def apply_t_updates(self, input_node) -> None:
        t = self.keys.t.get(input_node, 0)
        if not t:
            return
        mine = self.g.alice_nodes if self.name == "alice" else self.g.oscar_nodes
        if input_node in self.theta and input_node in mine:
            self.theta[input_node] = self.theta[input_node].corrected(1, 0)
        for j in self.g.neighbors(input_node):
            if j in mine and j in self.theta:
                self.theta[j] = self.theta[j].corrected(0, 1)

    def corrected_angle(self, i) -> DyadicAngle:
        sx = self.s.get(self.finv.get(i), 0) if i not in self.g.inputs else 0
        sz = 0
        for k in z_signal_set(self.g, self.flow, i):
            sz ^= self.s[k]
        return self.theta[i].corrected(sx, sz)

    def delta(self, i) -> DyadicAngle:
        phi_prime = self.corrected_angle(i)
        return phi_prime.plus_pi_times(self.keys.r[i]) + self.pads[i]

    def decode(self, i, s_tilde: int) -> None:
        self.s[i] = (s_tilde ^ self.keys.r[i]) & 1


def _prepare_and_send(engine, node) -> None:
    """Client-side preparation of one qubit plus the send to the server."""
    g, mode = engine.g, engine.mode
    owner = "alice" if node in g.alice_nodes else "oscar"
    client = engine.alice if owner == "alice" else engine.oscar
    pad = client.pads[node]
    if node in g.inputs and mode.quantum_input:
        t = client.keys.t[node]
        engine.channel.check_owner("alice", node)
        engine.channel.reg.apply_one_time_pad(node, pad, t)
        engine.alice.apply_t_updates(node)
        engine.oscar.apply_t_updates(node)
    elif node in g.inputs:
        c = engine.input_bits.get(node, 0)
        engine.channel.alloc_plus(owner, node, pad.plus_pi_times(c))
    else:
        engine.channel.alloc_plus(owner, node, pad)
    engine.channel.transfer(node, "bob")
    engine.transcript.record(owner, "bob", QubitToBob(node))
    engine.bob.on_qubit(engine.ctx, node)


def _measure_round(engine, node) -> None:
    g = engine.g
    owner = "alice" if node in g.alice_nodes else "oscar"
    client = engine.alice if owner == "alice" else engine.oscar
    delta = client.delta(node)
    engine.transcript.record(owner, "bob", AngleToBob(node, delta))
    engine.ctx._last_probability = 1.0
    before = node in engine.ctx.measured
    s_tilde = int(engine.bob.measure(engine.ctx, node, delta)) & 1
    if not before and node not in engine.ctx.measured:
        engine.transcript.note_deviation(f"server never measured {node!r}")
    engine.transcript.record("bob", "alice", OutcomeFromBob(node, s_tilde, "alice"))
    engine.transcript.record("bob", "oscar", OutcomeFromBob(node, s_tilde, "oscar"))
    engine.alice.decode(node, s_tilde)
    engine.oscar.decode(node, s_tilde)
    engine.probability *= getattr(engine.ctx, "_last_probability", 1.0)


def _receive_output(engine, node) -> None:
    """Server hands one output qubit back; the main client corrects it."""
    g = engine.g
    engine.bob.release_outputs(engine.ctx, (node,))
    engine.channel.transfer(node, "alice")
    engine.transcript.record("bob", "alice", OutputQubits((node,)))
    alice = engine.alice
    sx = alice.s.get(alice.finv.get(node), 0)
    sx ^= alice.keys.t.get(node, 0)
    sz = 0
    for k in z_signal_set(g, alice.flow, node):
        sz ^= alice.s[k]
    for k in g.neighbors(node) & g.inputs:
        sz ^= alice.keys.t.get(k, 0)
    engine.channel.reg.apply_correction(node, sx, sz)


class _Engine:
    def __init__(self, public: PublicInfo, alice_in: AliceInputs,
                 oscar_in: OscarInputs, mode: IOMode, bob,
                 keys: Keys, alice_pads, oscar_pads, outcome_source):
        g = public.graph
        _validate_io(g, mode)
        self.g = g
        self.mode = mode
        self.public = public
        flow = public.flow()
        measured = set(_measured_nodes(g, mode, public.order))
        theta = dict(alice_in.phi)
        theta.update(oscar_in.psi)
        missing = measured - set(theta)
        if missing:
            raise ProtocolError(f"missing angles for {sorted(missing, key=node_sort_key)}")
        self.alice = _Client("alice", g, flow, theta, keys, alice_pads)
        self.oscar = _Client("oscar", g, flow, theta, keys, oscar_pads)
        self.input_bits = dict(alice_in.input_bits or {})
        self.channel = ChannelRegister()
        self.transcript = Transcript(keys=keys)
        self.bob = bob
        self.ctx = BobContext(self.channel, outcome_source, self.transcript)
        self.probability = 1.0
        if mode.quantum_input:
            vec = alice_in.input_state
            if vec is None:
                raise ProtocolError("quantum input mode needs an input state")
            self.channel.alloc_state(
                "alice", sorted(g.inputs, key=node_sort_key), np.asarray(vec)
            )

    def client_prepared(self) -> list:
        g, mode = self.g, self.mode
        pos = self.public.order.position()
        nodes = g.vertices if not mode.quantum_output else g.measured
        return sorted(nodes, key=lambda n: pos[n])

    def finish(self) -> ProtocolResult:
        g, mode = self.g, self.mode
        outs = tuple(sorted(g.outputs, key=node_sort_key))
        if mode.quantum_output:
            state = self.channel.reg.statevector(outs) if self.channel.reg.valid else None
            return ProtocolResult(state, None, self.transcript, dict(self.alice.s),
                                  self.probability, self.channel.peak_live, outs,
                                  dict(self.ctx.measured))
        bits = {o: self.alice.s[o] for o in outs}
        return ProtocolResult(None, bits, self.transcript, dict(self.alice.s),
                              self.probability, self.channel.peak_live, outs,
                              dict(self.ctx.measured))


def _resolve_randomness(public, mode, seeds, keys, alice_pads, oscar_pads,
                        outcome_source):
    g = public.graph
    if seeds is None:
        seeds = Seeds()
    elif isinstance(seeds, int):
        seeds = Seeds(keys=seeds, alice=seeds + 1, oscar=seeds + 2, outcomes=seeds + 3)
    if keys is None:
        keys = _draw_keys(g, mode, public.order, seeds.keys)
    if alice_pads is None:
        nodes = [n for n in _client_pad_nodes(g, mode) if n in g.alice_nodes]
        alice_pads = _draw_pads(sorted(nodes, key=node_sort_key), public.b, seeds.alice)
    if oscar_pads is None:
        nodes = [n for n in _client_pad_nodes(g, mode) if n in g.oscar_nodes]
        oscar_pads = _draw_pads(sorted(nodes, key=node_sort_key), public.b, seeds.oscar)
    if outcome_source is None:
        outcome_source = SeededOutcomes(seeds.outcomes)
    return keys, alice_pads, oscar_pads, outcome_source


def _client_pad_nodes(g: OpenGraph, mode: IOMode) -> frozenset:
    return g.vertices if not mode.quantum_output else g.measured


def run_boqc(public: PublicInfo, alice_in: AliceInputs, oscar_in: OscarInputs,
             io_mode: Union[IOMode, str] = IOMode.QQ, bob=None, *,
             seeds=None, keys: Optional[Keys] = None, alice_pads=None,
             oscar_pads=None, outcome_source=None) -> ProtocolResult:
    """One run of the all-at-once protocol. Deterministic given explicit
    keys, pads and outcomes."""
    mode = IOMode(io_mode)
    keys, alice_pads, oscar_pads, outcome_source = _resolve_randomness(
        public, mode, seeds, keys, alice_pads, oscar_pads, outcome_source)
    if bob is None:
        bob = HonestBob()
    eng = _Engine(public, alice_in, oscar_in, mode, bob,
                  keys, alice_pads, oscar_pads, outcome_source)
    g = eng.g

    # (1) state preparation, clients first, then the server's own outputs
    for node in eng.client_prepared():
        _prepare_and_send(eng, node)
    if mode.quantum_output:
        pos = public.order.position()
        for node in sorted(g.outputs, key=lambda n: pos[n]):
            eng.bob.prepare_output(eng.ctx, node)

    # (2) graph state formation
    pos = public.order.position()
    edges = sorted(g.edges, key=lambda e: (pos[e[0]], pos[e[1]]))
    eng.bob.entangle(eng.ctx, edges)

    # (3) interaction and measurement
    for node in _measured_nodes(g, mode, public.order):
        _measure_round(eng, node)

    # (4) output transmission and correction
    if mode.quantum_output:
        for node in sorted(g.outputs, key=lambda n: pos[n]):
            _receive_output(eng, node)
    return eng.finish()


def run_boqco(public: PublicInfo, alice_in: AliceInputs, oscar_in: OscarInputs,
              io_mode: Union[IOMode, str] = IOMode.QQ, bob=None, *,
              seeds=None, keys: Optional[Keys] = None, alice_pads=None,
              oscar_pads=None, outcome_source=None) -> ProtocolResult:
    """One run of the lazily-scheduled protocol: per node, fresh qubits of
    its assignment set are sent, forward edges entangled, then the node is
    measured or handed back."""
    mode = IOMode(io_mode)
    if public.order is None:
        raise ProtocolError("lazy protocol needs a total order")
    keys, alice_pads, oscar_pads, outcome_source = _resolve_randomness(
        public, mode, seeds, keys, alice_pads, oscar_pads, outcome_source)
    if bob is None:
        bob = HonestBob()
    eng = _Engine(public, alice_in, oscar_in, mode, bob,
                  keys, alice_pads, oscar_pads, outcome_source)
    g = eng.g
    pos = public.order.position()
    asets = assignment_sets(g, public.order)
    measured = set(_measured_nodes(g, mode, public.order))

    first = True
    for i in public.order:
        if first:
            for node in sorted(g.inputs, key=lambda n: pos[n]):
                _prepare_and_send(eng, node)
            first = False
        for k in sorted(asets[i], key=lambda n: pos[n]):
            if k in g.outputs and mode.quantum_output:
                eng.bob.prepare_output(eng.ctx, k)
            else:
                _prepare_and_send(eng, k)
        fwd = [(i, k) for k in sorted(g.neighbors(i), key=lambda n: pos[n])
               if pos[k] > pos[i]]
        eng.bob.entangle(eng.ctx, fwd)
        if i in measured:
            _measure_round(eng, i)
        else:
            _receive_output(eng, i)
    return eng.finish()
