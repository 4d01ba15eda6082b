"""Blindness harness: the server's view in the real and ideal worlds.

The ideal world attaches a simulator at the server's interface of the
ideal resource: the simulator hands the server halves of EPR pairs and
uniformly random measurement angles, while the resource teleports the
inputs, measures its halves at angles that remote-prepare exactly what
the real protocol would have sent, and decodes outcomes.  Blindness holds
when the server's complete view, classical records plus received quantum
states, is identically distributed in both worlds.

Views are computed two ways: a register-level run of the relaxation
(faithful state machines, used at small scale and as the semantic
reference) and an exhaustive enumeration kernel over the full key space
(used for the desk-scale equality claims).  The two engines cross-check
each other on small graphs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._enum import (WORLD_IDEAL, WORLD_REAL, EnumTables, bin_index_of,
                    _delta_marginal, run_enumeration)
from ._util import node_sort_key
from .angles import DyadicAngle
from .calculus import (
    build_standard_pattern,
    channel_of_pattern,
    x_signal_set,
    z_signal_set,
)
from .graphstate import OpenGraph
from .protocol import (
    AliceInputs,
    AngleToBob,
    BobBehavior,
    BobContext,
    ChannelRegister,
    HONEST,
    IOMode,
    Keys,
    OscarInputs,
    OutcomeFromBob,
    OutputQubits,
    ProtocolError,
    ProtocolResult,
    PublicInfo,
    QubitToBob,
    Transcript,
    _measured_nodes,
    _client_pad_nodes,
    run_boqc,
    run_boqco,
)
from .qsim import DensityMatrix, ForcedOutcomes, QuantumRegister, SeededOutcomes, maximally_mixed


class StructuralMismatchError(ValueError):
    """Raised when two views cannot be compared event for event."""


@dataclass(frozen=True)
class ViewDistance:
    classical_tvd: float
    quantum_trace_distance: float

    def passes(self, tol: float = 1e-9) -> bool:
        return self.classical_tvd <= tol and self.quantum_trace_distance <= tol


@dataclass
class BobView:
    """Ensemble view at the server's interface.

    ``classical`` is the exact joint distribution over per-round records
    (angle digit sent to the server, the server's raw outcome bit), flat
    over mixed-radix bins in round order; sampled views store it sparsely.
    ``qubit_avg`` holds the ensemble-averaged state of each received qubit
    and ``joint_avg`` their joint average; past the size cap only pairwise
    marginals (``pair_avg``) are kept.  ``cond_avg`` optionally holds the
    averages conditioned on the round's own angle digit.
    """

    world: str
    protocol: str
    mode: str
    behavior: str
    b: int
    schedule: tuple
    measured_nodes: tuple
    classical: np.ndarray
    qubit_avg: dict
    joint_avg: Optional[DensityMatrix]
    pair_avg: Optional[dict] = None
    cond_avg: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def delta_histogram(self, node) -> np.ndarray:
        d = self.measured_nodes.index(node)
        if isinstance(self.classical, dict):
            m = len(self.measured_nodes)
            big = 1 << self.b
            out = np.zeros(big)
            for idx, p in self.classical.items():
                digit = ((idx >> m) // (big ** d)) % big
                out[digit] += p
            return out
        return _delta_marginal(self.classical, self.measured_nodes, self.b, d)

    def to_json(self) -> dict:
        return {
            "world": self.world,
            "protocol": self.protocol,
            "mode": self.mode,
            "behavior": self.behavior,
            "b": self.b,
            "delta_histograms": {
                repr(n): self.delta_histogram(n).tolist() for n in self.measured_nodes
            },
            "qubit_avg": {
                repr(n): [[[z.real, z.imag] for z in row] for row in m_]
                for n, m_ in self.qubit_avg.items()
            },
            "meta": self.meta,
        }


JOINT_VIEW_CAP = 12


def schedule_of(public: PublicInfo, mode: IOMode, protocol: str) -> tuple:
    """Deterministic event schedule both worlds must follow."""
    g = public.graph
    pos = public.order.position()
    measured = _measured_nodes(g, mode, public.order)
    events: list = []
    if protocol == "boqc":
        for n in sorted(_client_pad_nodes(g, mode), key=lambda v: pos[v]):
            events.append(("qubit", n))
        for n in measured:
            events.append(("angle", n))
            events.append(("outcome", n))
        if mode.quantum_output:
            for n in sorted(g.outputs, key=lambda v: pos[v]):
                events.append(("output", n))
        return tuple(events)
    if protocol != "boqco":
        raise ValueError(f"unknown protocol {protocol!r}")
    from .graphstate import assignment_sets

    asets = assignment_sets(g, public.order)
    first = True
    for i in public.order:
        if first:
            for n in sorted(g.inputs, key=lambda v: pos[v]):
                events.append(("qubit", n))
            first = False
        for k in sorted(asets[i], key=lambda v: pos[v]):
            if not (k in g.outputs and mode.quantum_output):
                events.append(("qubit", k))
        if i in g.outputs and mode.quantum_output:
            events.append(("output", i))
        else:
            events.append(("angle", i))
            events.append(("outcome", i))
    return tuple(events)


# -- reference channel (the plain one-computer oracle) -----------------------


def _input_vector(g: OpenGraph, mode: IOMode, alice_in: AliceInputs) -> np.ndarray:
    inputs = sorted(g.inputs, key=node_sort_key)
    if mode.quantum_input:
        vec = np.asarray(alice_in.input_state, dtype=np.complex128).reshape(-1)
        if vec.size != 1 << len(inputs):
            raise ProtocolError("input state dimension mismatch")
        return vec
    bits = alice_in.input_bits or {}
    vec = np.ones(1, dtype=np.complex128)
    for i in inputs:
        c = bits.get(i, 0) & 1
        vec = np.kron(vec, np.array([1.0, (-1.0) ** c]) / math.sqrt(2.0))
    return vec


def reference_output(public: PublicInfo, mode: IOMode, alice_in: AliceInputs,
                     oscar_in: OscarInputs):
    """What the computation produces on one honest quantum computer.

    Quantum output: the exact channel matrix over the sorted outputs.
    Classical output: the joint outcome distribution from measuring each
    output at its own angle on that channel's state.
    """
    g = public.graph
    mode = IOMode(mode)
    flow = public.flow()
    theta = dict(alice_in.phi)
    theta.update(oscar_in.psi)
    pattern_theta = {i: theta[i] for i in g.measured}
    pattern = build_standard_pattern(g, flow, pattern_theta, public.order)
    vec = _input_vector(g, mode, alice_in)
    dm = channel_of_pattern(pattern, vec)
    if mode.quantum_output:
        return dm.matrix
    outputs = sorted(g.outputs, key=node_sort_key)
    dist = np.zeros(1 << len(outputs))
    for y in range(dist.size):
        proj = np.ones((1, 1), dtype=np.complex128)
        for k, o in enumerate(outputs):
            bit = (y >> (len(outputs) - 1 - k)) & 1
            ang = theta[o].radians + bit * math.pi
            v = np.array([1.0, np.exp(1j * ang)]) / math.sqrt(2.0)
            proj = np.kron(proj, np.outer(v, v.conj()))
        dist[y] = float(np.real(np.trace(dm.matrix @ proj)))
    return dist


# -- register-level ideal world (the relaxation as a state machine) ----------


@dataclass
class RunView:
    """One run's record at the server interface: classical rounds plus the
    received-qubit states (leaf-wise, retrodicted through the commuting
    resource measurements)."""

    signature: tuple
    received: dict
    bob_bits: dict
    probability: float


def _sim_resource_angle(theta_prime: DyadicAngle, c_bit: int,
                        t_bit: int = 0) -> DyadicAngle:
    """Resource-side measurement angle that remote-prepares the pad form.

    measure_angle(x) on the kept qubit collapses the sent one to
    |+_{-x+pi r}> (or to X^t Z(-x+pi r)|psi> for a teleported input, with
    the X on the outside).  The protocol's pad has the Z on the outside,
    so for t=1 the angle sign flips to land on Z(theta'+pi r) X |psi>.
    """
    base = theta_prime.plus_pi_times(c_bit)
    return base if t_bit else -base


def run_simulator_boqc(public: PublicInfo, alice_in: AliceInputs,
                       oscar_in: OscarInputs, io_mode=IOMode.QQ, bob=None, *,
                       deltas: Optional[dict] = None, seeds=None,
                       outcome_source=None):
    """Ideal-world relaxation with the all-at-once schedule."""
    return _run_simulator(public, alice_in, oscar_in, IOMode(io_mode), bob,
                          deltas, seeds, outcome_source, lazy=False)


def run_simulator_boqco(public: PublicInfo, alice_in: AliceInputs,
                        oscar_in: OscarInputs, io_mode=IOMode.QQ, bob=None, *,
                        deltas: Optional[dict] = None, seeds=None,
                        outcome_source=None):
    """Ideal-world relaxation re-ordered along the lazy schedule."""
    return _run_simulator(public, alice_in, oscar_in, IOMode(io_mode), bob,
                          deltas, seeds, outcome_source, lazy=True)


def _run_simulator(public, alice_in, oscar_in, mode, bob, deltas, seeds,
                   outcome_source, lazy):
    from .graphstate import assignment_sets
    from .protocol import HonestBob, _validate_io

    g = public.graph
    _validate_io(g, mode)
    flow = public.flow()
    finv = flow.inverse()
    pos = public.order.position()
    measured = _measured_nodes(g, mode, public.order)
    theta = dict(alice_in.phi)
    theta.update(oscar_in.psi)
    if bob is None:
        bob = HonestBob()
    if isinstance(bob, BobBehavior):
        bob = bob.to_bob(public.b)
    rng = np.random.default_rng(seeds if seeds is not None else 0)
    if deltas is None:
        deltas = {i: DyadicAngle(int(rng.integers(0, 1 << public.b)), public.b)
                  for i in measured}
    if outcome_source is None:
        outcome_source = SeededOutcomes(int(rng.integers(0, 2 ** 31)))

    channel = ChannelRegister()
    transcript = Transcript()
    ctx = BobContext(channel, outcome_source, transcript)
    s: dict = {}
    t: dict = {}
    r: dict = {}
    received: dict = {}
    bits = dict(alice_in.input_bits or {})

    if mode.quantum_input:
        vec = np.asarray(alice_in.input_state, dtype=np.complex128).reshape(-1)
        channel.alloc_state("resource",
                            [("in", i) for i in sorted(g.inputs, key=node_sort_key)],
                            vec)

    def deliver(i) -> None:
        channel.reg.alloc_bell(i, ("s", i))
        channel.owner[i] = "resource"
        channel.owner[("s", i)] = "resource"
        channel._bump(2)
        channel.transfer(i, "bob")
        transcript.record("simulator", "bob", QubitToBob(i))
        received[i] = channel.reg.reduced_density([i])
        bob.on_qubit(ctx, i)
        if i in g.inputs and mode.quantum_input:
            channel.reg.apply_cnot(("in", i), ("s", i))
            res = channel.reg.measure_z(("s", i), outcome_source)
            channel.drop(("s", i))
            t[i] = res.outcome
            nonlocal_prob[0] *= res.probability
            if t[i]:
                if i in theta:
                    theta[i] = theta[i].corrected(1, 0)
                for j in g.neighbors(i):
                    if j in theta:
                        theta[j] = theta[j].corrected(0, 1)

    def round_for(i) -> None:
        sx = s.get(finv.get(i), 0) if i not in g.inputs else 0
        sz = 0
        for k in z_signal_set(g, flow, i):
            sz ^= s[k]
        phi_prime = theta[i].corrected(sx, sz)
        delta = deltas[i]
        transcript.record("simulator", "bob", AngleToBob(i, delta))
        ctx._last_probability = 1.0
        s_tilde = int(bob.measure(ctx, i, delta)) & 1
        nonlocal_prob[0] *= ctx._last_probability
        transcript.record("bob", "simulator", OutcomeFromBob(i, s_tilde, "alice"))
        transcript.record("bob", "simulator", OutcomeFromBob(i, s_tilde, "oscar"))
        theta_prime = delta - phi_prime
        is_q_input = i in g.inputs and mode.quantum_input
        target = ("in", i) if is_q_input else ("s", i)
        c_bit = 0 if mode.quantum_input or i not in g.inputs else bits.get(i, 0) & 1
        t_bit = t.get(i, 0) if is_q_input else 0
        res = channel.reg.measure_angle(
            target, _sim_resource_angle(theta_prime, c_bit, t_bit),
            outcome_source)
        channel.drop(target)
        nonlocal_prob[0] *= res.probability
        r[i] = res.outcome
        s[i] = s_tilde ^ r[i]
        # retrodicted received state for this leaf
        if i in g.inputs and mode.quantum_input:
            rho = _teleported_input_state(g, alice_in, i, t[i],
                                          theta_prime.plus_pi_times(r[i]))
            # pad form Z(.) X^t: matches _prep_density_real
        else:
            ang = theta_prime.plus_pi_times(r[i]).plus_pi_times(c_bit)
            v = np.array([1.0, np.exp(1j * ang.radians)]) / math.sqrt(2.0)
            rho = DensityMatrix((i,), np.outer(v, v.conj()))
        received[i] = rho

    def receive_output(i) -> None:
        bob.release_outputs(ctx, (i,))
        channel.transfer(i, "resource")
        transcript.record("bob", "simulator", OutputQubits((i,)))
        sx = s.get(finv.get(i), 0) ^ t.get(i, 0)
        sz = 0
        for k in z_signal_set(g, flow, i):
            sz ^= s[k]
        for k in g.neighbors(i) & g.inputs:
            sz ^= t.get(k, 0)
        channel.reg.apply_correction(i, sx, sz)

    nonlocal_prob = [1.0]
    if not lazy:
        for i in sorted(_client_pad_nodes(g, mode), key=lambda v: pos[v]):
            deliver(i)
        if mode.quantum_output:
            for o in sorted(g.outputs, key=lambda v: pos[v]):
                bob.prepare_output(ctx, o)
        edges = sorted(g.edges, key=lambda e: (pos[e[0]], pos[e[1]]))
        bob.entangle(ctx, edges)
        for i in measured:
            round_for(i)
        if mode.quantum_output:
            for o in sorted(g.outputs, key=lambda v: pos[v]):
                receive_output(o)
    else:
        asets = assignment_sets(g, public.order)
        first = True
        for i in public.order:
            if first:
                for nd in sorted(g.inputs, key=lambda v: pos[v]):
                    deliver(nd)
                first = False
            for k in sorted(asets[i], key=lambda v: pos[v]):
                if k in g.outputs and mode.quantum_output:
                    bob.prepare_output(ctx, k)
                else:
                    deliver(k)
            fwd = [(i, k) for k in sorted(g.neighbors(i), key=lambda v: pos[v])
                   if pos[k] > pos[i]]
            bob.entangle(ctx, fwd)
            if i in set(measured):
                round_for(i)
            else:
                receive_output(i)

    outs = tuple(sorted(g.outputs, key=node_sort_key))
    if mode.quantum_output:
        state = channel.reg.statevector(outs) if channel.reg.valid else None
        result = ProtocolResult(state, None, transcript, dict(s),
                                nonlocal_prob[0], channel.peak_live, outs,
                                dict(ctx.measured))
    else:
        result = ProtocolResult(None, {o: s[o] for o in outs}, transcript,
                                dict(s), nonlocal_prob[0], channel.peak_live,
                                outs, dict(ctx.measured))
    sig = _signature_from(transcript, ctx.measured, measured)
    return result, RunView(sig, received, dict(ctx.measured), nonlocal_prob[0])


def _teleported_input_state(g, alice_in, node, t_bit, pad: DyadicAngle) -> DensityMatrix:
    inputs = sorted(g.inputs, key=node_sort_key)
    reg = QuantumRegister.from_state(
        inputs, np.asarray(alice_in.input_state, dtype=np.complex128))
    rho = reg.reduced_density([node]).matrix
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    z = np.diag([1.0, np.exp(1j * pad.radians)]).astype(np.complex128)
    if t_bit:
        rho = x @ rho @ x
    return DensityMatrix((node,), z @ rho @ z.conj().T)


def _signature_from(transcript: Transcript, bob_bits: dict, measured) -> tuple:
    sig = []
    for e in transcript.entries:
        msg = e.message
        if isinstance(msg, AngleToBob):
            sig.append((msg.node, msg.delta.k, bob_bits.get(msg.node, 0)))
    return tuple(sig)


# -- ensemble views ------------------------------------------------------------


def _prep_density_real(g, mode, alice_in, node, pad: DyadicAngle, t_bit: int) -> DensityMatrix:
    if node in g.inputs and mode.quantum_input:
        inputs = sorted(g.inputs, key=node_sort_key)
        reg = QuantumRegister.from_state(
            inputs, np.asarray(alice_in.input_state, dtype=np.complex128))
        rho = reg.reduced_density([node]).matrix
        x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
        if t_bit:
            rho = x @ rho @ x
        zm = np.diag([1.0, np.exp(1j * pad.radians)]).astype(np.complex128)
        return DensityMatrix((node,), zm @ rho @ zm.conj().T)
    c = (alice_in.input_bits or {}).get(node, 0) & 1 if node in g.inputs else 0
    ang = pad.plus_pi_times(c)
    v = np.array([1.0, np.exp(1j * ang.radians)]) / math.sqrt(2.0)
    return DensityMatrix((node,), np.outer(v, v.conj()))


def _average_received_states(public: PublicInfo, mode: IOMode,
                             alice_in: AliceInputs, world: str):
    """Exact ensemble averages of each received qubit, and their joint."""
    g = public.graph
    b = public.b
    big = 1 << b
    sent = sorted(_client_pad_nodes(g, mode), key=node_sort_key)
    qubit_avg: dict = {}
    for node in sent:
        acc = np.zeros((2, 2), dtype=np.complex128)
        count = 0
        t_range = (0, 1) if (node in g.inputs and mode.quantum_input) else (0,)
        for t_bit in t_range:
            for k in range(big):
                if world == "real":
                    dm = _prep_density_real(g, mode, alice_in, node,
                                            DyadicAngle(k, b), t_bit)
                else:
                    # EPR half at delivery: trace out the kept half exactly
                    reg = QuantumRegister()
                    reg.alloc_bell(node, ("s", node))
                    dm = reg.reduced_density([node])
                acc += dm.matrix
                count += 1
        qubit_avg[node] = acc / count
    joint = None
    pairs = None
    if len(sent) > JOINT_VIEW_CAP:
        # joint state too large; keep pairwise marginals instead
        pairs = {}
        for i, a in enumerate(sent):
            for bnd in sent[i + 1:]:
                pairs[(a, bnd)] = DensityMatrix(
                    (a, bnd), np.kron(qubit_avg[a], qubit_avg[bnd]))
    if len(sent) <= JOINT_VIEW_CAP:
        if mode.quantum_input and world == "real":
            inputs = sorted(g.inputs, key=node_sort_key)
            reg = QuantumRegister.from_state(
                inputs, np.asarray(alice_in.input_state, dtype=np.complex128))
            rho = reg.reduced_density(inputs).matrix
            for ax, node in enumerate(inputs):
                rho = _pad_channel_on(rho, len(inputs), ax, b)
            mat = rho
            rest = [n for n in sent if n not in inputs]
            for n in rest:
                mat = np.kron(mat, qubit_avg[n])
            nodes = tuple(inputs + rest)
            joint = DensityMatrix(nodes, mat).permuted(tuple(sent))
        else:
            mat = np.ones((1, 1), dtype=np.complex128)
            for n in sent:
                mat = np.kron(mat, qubit_avg[n])
            joint = DensityMatrix(tuple(sent), mat)
    return qubit_avg, joint, pairs


def _pad_channel_on(rho: np.ndarray, n: int, axis: int, b: int) -> np.ndarray:
    """Average of (Z(a) X^t) rho (Z(a) X^t)^dag over the pad group on one axis."""
    big = 1 << b
    dim = 1 << n
    acc = np.zeros_like(rho)
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    for t_bit in (0, 1):
        for k in range(big):
            zm = np.diag([1.0, np.exp(1j * math.pi * k / (1 << (b - 1)))])
            op1 = zm @ (x if t_bit else np.eye(2))
            full = np.eye(1, dtype=np.complex128)
            for ax in range(n):
                full = np.kron(full, op1 if ax == axis else np.eye(2))
            acc += full @ rho @ full.conj().T
    return acc / (2 * big)


def _bin_index(signature, measured, b: int) -> int:
    lookup = {node: d for d, node in enumerate(measured)}
    m = len(measured)
    deltas = [0] * m
    bits = [0] * m
    for node, delta_k, bob_bit in signature:
        d = lookup[node]
        deltas[d] = delta_k
        bits[d] = bob_bit
    return bin_index_of(deltas, bits, m, b)


def _runner_ensemble(public, mode, alice_in, oscar_in, behavior, world,
                     protocol, randomness_off=False, want_cond=True):
    """Exhaustive view via the party state machines (small graphs only)."""
    g = public.graph
    b = public.b
    big = 1 << b
    mode = IOMode(mode)
    measured = tuple(_measured_nodes(g, mode, public.order))
    m = len(measured)
    if (big * 2) ** m > 1 << 22:
        raise ProtocolError("runner ensemble too large; use the kernel")
    pad_nodes = sorted(_client_pad_nodes(g, mode), key=node_sort_key)
    t_nodes = sorted(g.inputs, key=node_sort_key) if mode.quantum_input else []
    hist = np.zeros((big * 2) ** m)
    cond: dict = {(n, k): np.zeros((2, 2), dtype=np.complex128)
                  for n in measured for k in range(big)} if want_cond else None
    runner = {"boqc": run_boqc, "boqco": run_boqco}[protocol]

    def leaf(res: ProtocolResult, received_states, sig) -> None:
        p = res.probability
        if p <= 1e-300:
            return
        hist[_bin_index(sig, measured, b)] += p
        if want_cond:
            drec = {node: dk for node, dk, _ in sig}
            for n in measured:
                if n in received_states:
                    cond[(n, drec[n])] += p * received_states[n].matrix

    total_keys = 0
    if world == "real":
        pad_space = [(DyadicAngle(0, b),)] * len(pad_nodes) if randomness_off \
            else [tuple(DyadicAngle(k, b) for k in range(big))] * len(pad_nodes)
        r_space = [(0,)] * m if randomness_off else [(0, 1)] * m
        t_space = [(0,)] * len(t_nodes) if randomness_off else [(0, 1)] * len(t_nodes)
        for pads in itertools.product(*pad_space):
            pad_map = dict(zip(pad_nodes, pads))
            a_pads = {n: v for n, v in pad_map.items() if n in g.alice_nodes}
            o_pads = {n: v for n, v in pad_map.items() if n in g.oscar_nodes}
            for rbits in itertools.product(*r_space):
                for tbits in itertools.product(*t_space):
                    keys = Keys(r=dict(zip(measured, rbits)),
                                t=dict(zip(t_nodes, tbits)))
                    total_keys += 1
                    for branch in itertools.product((0, 1), repeat=m):
                        fo = ForcedOutcomes(dict(zip(measured, branch)))
                        res = runner(public, alice_in, oscar_in, mode,
                                     behavior.to_bob(b), keys=keys,
                                     alice_pads=a_pads, oscar_pads=o_pads,
                                     outcome_source=fo)
                        recv = {n: _prep_density_real(
                                    g, mode, alice_in, n, pad_map[n],
                                    keys.t.get(n, 0))
                                for n in pad_nodes}
                        sig = _signature_from(res.transcript, res.bob_private,
                                              measured)
                        leaf(res, recv, sig)
    else:
        sim = run_simulator_boqc if protocol == "boqc" else run_simulator_boqco
        resource_nodes = []
        for i in measured:
            resource_nodes.append(("in", i) if (i in g.inputs and mode.quantum_input)
                                  else ("s", i))
        t_targets = [("s", i) for i in t_nodes]
        for dks in itertools.product(range(big), repeat=m):
            deltas = {n: DyadicAngle(k, b) for n, k in zip(measured, dks)}
            total_keys += 1
            for rbits in itertools.product((0, 1), repeat=m):
                for tbits in itertools.product((0, 1), repeat=len(t_nodes)):
                    for branch in itertools.product((0, 1), repeat=m):
                        forced = dict(zip(measured, branch))
                        forced.update(dict(zip(resource_nodes, rbits)))
                        forced.update(dict(zip(t_targets, tbits)))
                        fo = ForcedOutcomes(forced)
                        res, rv = sim(public, alice_in, oscar_in, mode,
                                      behavior.to_bob(b), deltas=deltas,
                                      outcome_source=fo)
                        leaf(res, rv.received, rv.signature)
    hist /= hist.sum()
    if want_cond:
        for key in cond:
            tot = np.trace(cond[key]).real
            if tot > 1e-300:
                cond[key] = cond[key] / tot
            else:
                cond[key] = maximally_mixed((key[0],)).matrix
    qubit_avg, joint, pairs = _average_received_states(public, mode, alice_in,
                                                       world)
    return BobView(
        world=world, protocol=protocol, mode=mode.value, behavior=behavior.name,
        b=b, schedule=schedule_of(public, mode, protocol), measured_nodes=measured,
        classical=hist, qubit_avg=qubit_avg, joint_avg=joint, pair_avg=pairs,
        cond_avg=cond,
        meta={"engine": "runner", "enumeration": "exhaustive",
              "randomness_off": randomness_off, "keys": total_keys},
    )


# -- enumeration-kernel views ---------------------------------------------------


def build_enum_tables(public: PublicInfo, mode: IOMode, alice_in: AliceInputs,
                      oscar_in: OscarInputs, behavior: BobBehavior,
                      world: str) -> EnumTables:
    from .protocol import _validate_io

    g = public.graph
    mode = IOMode(mode)
    _validate_io(g, mode)
    b = public.b
    big = 1 << b
    half = big >> 1
    flow = public.flow()
    finv = flow.inverse()
    measured = tuple(_measured_nodes(g, mode, public.order))
    m = len(measured)
    rank = {n: d for d, n in enumerate(measured)}
    outputs = sorted(g.outputs, key=node_sort_key) if mode.quantum_output else []
    n = m + len(outputs)
    pos = dict(rank)
    for j, o in enumerate(outputs):
        pos[o] = m + (len(outputs) - 1 - j)

    theta = dict(alice_in.phi)
    theta.update(oscar_in.psi)
    t_nodes = sorted(g.inputs, key=node_sort_key) if mode.quantum_input else []
    t_slot = {nd: j for j, nd in enumerate(t_nodes)}
    n_t = len(t_nodes)
    bits = dict(alice_in.input_bits or {})

    theta_base = np.array([theta[i].k for i in measured], dtype=np.int64)
    own_tslot = np.array([t_slot.get(i, -1) for i in measured], dtype=np.int64)
    tmask_theta = np.zeros(m, dtype=np.int64)
    cterm = np.zeros(m, dtype=np.int64)
    xdep = np.full(m, -1, dtype=np.int64)
    zmask = np.zeros(m, dtype=np.int64)
    for d, i in enumerate(measured):
        for k in g.neighbors(i):
            if k in t_slot:
                tmask_theta[d] |= 1 << t_slot[k]
        if i in g.inputs and not mode.quantum_input:
            cterm[d] = (bits.get(i, 0) & 1) * half
        src = x_signal_set(g, flow, i)
        if src:
            (sn,) = src
            xdep[d] = rank[sn]
        for k in z_signal_set(g, flow, i):
            zmask[d] |= 1 << rank[k]

    # initial state rows per teleport-bit assignment, entangling signs folded
    dim = 1 << n
    xs = np.arange(dim)
    cz = np.ones(dim)
    for a_, b_ in g.edges:
        cz = cz * (1.0 - 2.0 * (((xs >> pos[a_]) & 1) & ((xs >> pos[b_]) & 1)))
    rows = []
    for t_assign in range(1 << max(n_t, 0)) if n_t else range(1):
        rows.append(_initial_state(g, mode, alice_in, measured, outputs, pos,
                                   t_assign, t_slot, world) * cz)
    base_cz = np.ascontiguousarray(np.stack(rows), dtype=np.complex128)

    if mode.quantum_output:
        out_xdep = np.full(len(outputs), -1, dtype=np.int64)
        out_zmask = np.zeros(len(outputs), dtype=np.int64)
        out_tmask = np.zeros(len(outputs), dtype=np.int64)
        for k, o in enumerate(outputs):
            src = x_signal_set(g, flow, o)
            if src:
                (sn,) = src
                out_xdep[k] = rank[sn]
            for z_ in z_signal_set(g, flow, o):
                out_zmask[k] |= 1 << rank[z_]
            for nb in g.neighbors(o) & g.inputs:
                if nb in t_slot:
                    out_tmask[k] |= 1 << t_slot[nb]
        out_rank = np.zeros(0, dtype=np.int64)
    else:
        souts = sorted(g.outputs, key=node_sort_key)
        out_rank = np.array([rank[o] for o in souts], dtype=np.int64)
        out_xdep = np.zeros(0, dtype=np.int64)
        out_zmask = np.zeros(0, dtype=np.int64)
        out_tmask = np.zeros(0, dtype=np.int64)

    n_keys = (big ** m) * (2 ** m) * (2 ** n_t)
    return EnumTables(
        world=WORLD_REAL if world == "real" else WORLD_IDEAL,
        n=n, m=m, b=b, n_t=n_t, measured_nodes=measured,
        output_nodes=tuple(sorted(g.outputs, key=node_sort_key)),
        quantum_output=mode.quantum_output, base_cz=base_cz,
        theta_base=theta_base, own_tslot=own_tslot, tmask_theta=tmask_theta,
        cterm=cterm, xdep=xdep, zmask=zmask,
        offset_h=(behavior.angle_offset_halfturns * half) % big,
        report_zero=1 if behavior.report == "zero" else 0,
        out_xdep=out_xdep, out_zmask=out_zmask, out_tmask=out_tmask,
        out_rank=out_rank, n_keys=n_keys, hist_size=(2 * big) ** m,
    )


def _initial_state(g, mode, alice_in, measured, outputs, pos, t_assign, t_slot,
                   world) -> np.ndarray:
    """Product/base state over the kernel's qubit layout, before pads."""
    n = len(measured) + len(outputs)
    bits = dict(alice_in.input_bits or {})
    plus = np.array([1.0, 1.0]) / math.sqrt(2.0)
    singles = {}
    for node in list(measured) + list(outputs):
        if node in g.inputs and mode.quantum_input:
            continue
        if node in g.inputs and world == "real":
            c = bits.get(node, 0) & 1
            singles[node] = np.array([1.0, (-1.0) ** c]) / math.sqrt(2.0)
        else:
            singles[node] = plus
    if not mode.quantum_input:
        vec = np.ones(1)
        for p in range(n - 1, -1, -1):
            node = next(nd for nd, pp in pos.items() if pp == p)
            vec = np.kron(vec, singles[node])
        return vec.astype(np.complex128)
    inputs = sorted(g.inputs, key=node_sort_key)
    invec = np.asarray(alice_in.input_state, dtype=np.complex128).reshape(-1).copy()
    tin = invec.reshape([2] * len(inputs))
    for j, nd in enumerate(inputs):
        if (t_assign >> t_slot[nd]) & 1:
            tin = np.flip(tin, axis=j)
    rest = [nd for nd in list(measured) + list(outputs) if nd not in g.inputs]
    rvec = np.ones(1)
    for nd in rest:
        rvec = np.kron(rvec, singles[nd])
    full = np.tensordot(tin.reshape(-1), rvec, axes=0).reshape(
        [2] * len(inputs) + [2] * len(rest))
    axis_of_pos = {}
    for j, nd in enumerate(inputs):
        axis_of_pos[pos[nd]] = j
    for j, nd in enumerate(rest):
        axis_of_pos[pos[nd]] = len(inputs) + j
    perm = [axis_of_pos[p] for p in range(n - 1, -1, -1)]
    return np.transpose(full, perm).reshape(-1).astype(np.complex128)


def _kernel_view(public, mode, alice_in, oscar_in, behavior, world, protocol,
                 reference=None) -> BobView:
    mode = IOMode(mode)
    tables = build_enum_tables(public, mode, alice_in, oscar_in, behavior, world)
    ref_chan = ref_dist = None
    if reference is not None:
        if mode.quantum_output:
            ref_chan = reference
        else:
            ref_dist = reference
    res = run_enumeration(tables, reference_channel=ref_chan,
                          reference_dist=ref_dist)
    qubit_avg, joint, pairs = _average_received_states(public, mode, alice_in,
                                                       world)
    return BobView(
        world=world, protocol=protocol, mode=mode.value, behavior=behavior.name,
        b=public.b, schedule=schedule_of(public, mode, protocol),
        measured_nodes=tables.measured_nodes, classical=res.hist,
        qubit_avg=qubit_avg, joint_avg=joint, pair_avg=pairs, cond_avg=None,
        meta={"engine": "kernel", "enumeration": "exhaustive",
              "keys": res.n_keys, "channel_max_err": res.chan_max_err,
              "prob_max_err": res.prob_max_err},
    )


def _sampled_view(public, mode, alice_in, oscar_in, behavior, world, protocol,
                  shots, seed) -> BobView:
    g = public.graph
    b = public.b
    big = 1 << b
    mode = IOMode(mode)
    measured = tuple(_measured_nodes(g, mode, public.order))
    hist: dict = {}
    rng = np.random.default_rng(seed)
    runner = {"boqc": run_boqc, "boqco": run_boqco}[protocol]
    sim = run_simulator_boqc if protocol == "boqc" else run_simulator_boqco
    for shot in range(shots):
        if world == "real":
            res = runner(public, alice_in, oscar_in, mode, behavior.to_bob(b),
                         seeds=int(rng.integers(0, 2 ** 31)))
            sig = _signature_from(res.transcript, res.bob_private, measured)
        else:
            res, rv = sim(public, alice_in, oscar_in, mode, behavior.to_bob(b),
                          seeds=int(rng.integers(0, 2 ** 31)))
            sig = rv.signature
        idx = _bin_index(sig, measured, b)
        hist[idx] = hist.get(idx, 0.0) + 1.0 / shots
    qubit_avg, joint, pairs = _average_received_states(public, mode, alice_in,
                                                       world)
    return BobView(
        world=world, protocol=protocol, mode=mode.value, behavior=behavior.name,
        b=b, schedule=schedule_of(public, mode, protocol),
        measured_nodes=measured, classical=hist, qubit_avg=qubit_avg,
        joint_avg=joint, pair_avg=pairs, cond_avg=None,
        meta={"engine": "runner", "enumeration": "sampled", "shots": shots},
    )


def real_view(public: PublicInfo, alice_in: AliceInputs, oscar_in: OscarInputs,
              mode=IOMode.QQ, behavior: BobBehavior = HONEST,
              protocol: str = "boqc", enumeration: str = "exhaustive",
              engine: str = "auto", shots: int = 10000, seed: int = 0,
              randomness_off: bool = False, reference=None) -> BobView:
    """The server's view ensemble in the real protocol."""
    return _view(public, alice_in, oscar_in, mode, behavior, protocol, "real",
                 enumeration, engine, shots, seed, randomness_off, reference)


def simulator_view(public: PublicInfo, alice_in: AliceInputs,
                   oscar_in: OscarInputs, mode=IOMode.QQ,
                   behavior: BobBehavior = HONEST, protocol: str = "boqc",
                   enumeration: str = "exhaustive", engine: str = "auto",
                   shots: int = 10000, seed: int = 0, reference=None) -> BobView:
    """The server's view ensemble against the ideal-world relaxation."""
    return _view(public, alice_in, oscar_in, mode, behavior, protocol, "ideal",
                 enumeration, engine, shots, seed, False, reference)


def _view(public, alice_in, oscar_in, mode, behavior, protocol, world,
          enumeration, engine, shots, seed, randomness_off, reference):
    mode = IOMode(mode)
    if enumeration == "sampled":
        return _sampled_view(public, mode, alice_in, oscar_in, behavior, world,
                             protocol, shots, seed)
    if enumeration != "exhaustive":
        raise ValueError("enumeration must be 'exhaustive' or 'sampled'")
    if randomness_off:
        if world != "real":
            raise ValueError("the negative control disables real-world keys only")
        return _runner_ensemble(public, mode, alice_in, oscar_in, behavior,
                                world, protocol, randomness_off=True)
    measured = _measured_nodes(public.graph, mode, public.order)
    small = len(measured) <= 3 and public.b <= 2
    if engine == "runner" or (engine == "auto" and small):
        return _runner_ensemble(public, mode, alice_in, oscar_in, behavior,
                                world, protocol)
    return _kernel_view(public, mode, alice_in, oscar_in, behavior, world,
                        protocol, reference=reference)


def compare_views(real: BobView, ideal: BobView) -> ViewDistance:
    """Total variation distance of the classical view and the largest trace
    distance over the received-state summaries."""
    if (real.mode, real.protocol, real.b, real.schedule, real.measured_nodes) != \
       (ideal.mode, ideal.protocol, ideal.b, ideal.schedule, ideal.measured_nodes):
        raise StructuralMismatchError("views disagree on schedule or shape")
    if isinstance(real.classical, dict) or isinstance(ideal.classical, dict):
        a = real.classical if isinstance(real.classical, dict) else \
            {i: p for i, p in enumerate(real.classical) if p}
        bb = ideal.classical if isinstance(ideal.classical, dict) else \
            {i: p for i, p in enumerate(ideal.classical) if p}
        tvd = 0.5 * sum(abs(a.get(k, 0.0) - bb.get(k, 0.0))
                        for k in set(a) | set(bb))
    else:
        if real.classical.shape != ideal.classical.shape:
            raise StructuralMismatchError("classical histograms differ in shape")
        tvd = 0.5 * float(np.abs(real.classical - ideal.classical).sum())
    qtd = 0.0
    for node, mat in real.qubit_avg.items():
        if node not in ideal.qubit_avg:
            raise StructuralMismatchError(f"received-qubit sets differ on {node!r}")
        a = DensityMatrix((node,), mat)
        qtd = max(qtd, a.trace_distance(DensityMatrix((node,), ideal.qubit_avg[node])))
    if real.joint_avg is not None and ideal.joint_avg is not None:
        qtd = max(qtd, real.joint_avg.trace_distance(ideal.joint_avg))
    if real.pair_avg is not None and ideal.pair_avg is not None:
        for key, dm in real.pair_avg.items():
            other = ideal.pair_avg.get(key)
            if other is not None:
                qtd = max(qtd, dm.trace_distance(other))
    if real.cond_avg is not None and ideal.cond_avg is not None:
        for key, mat in real.cond_avg.items():
            other = ideal.cond_avg.get(key)
            if other is not None:
                a = DensityMatrix((key,), mat)
                qtd = max(qtd, a.trace_distance(DensityMatrix((key,), other)))
    return ViewDistance(tvd, qtd)


# -- blindness report (CLI backend) --------------------------------------------


def blindness_report(public, alice_in, oscar_in, mode, protocol="boqc",
                     behaviors=(HONEST,), enumeration="exhaustive",
                     engine="auto", shots=10000, seed=0,
                     negative_control=False) -> dict:
    mode = IOMode(mode)
    report: dict = {"protocol": protocol, "mode": mode.value,
                    "enumeration": enumeration, "behaviors": {}}
    worst = ViewDistance(0.0, 0.0)
    for behavior in behaviors:
        rv = real_view(public, alice_in, oscar_in, mode, behavior, protocol,
                       enumeration, engine, shots, seed)
        iv = simulator_view(public, alice_in, oscar_in, mode, behavior,
                            protocol, enumeration, engine, shots, seed)
        dist = compare_views(rv, iv)
        entry = {
            "classical_tvd": dist.classical_tvd,
            "quantum_trace_distance": dist.quantum_trace_distance,
            "delta_histograms": {repr(n): rv.delta_histogram(n).tolist()
                                 for n in rv.measured_nodes},
            "qubit_avg": {repr(n): [[[z.real, z.imag] for z in row]
                                    for row in m_]
                          for n, m_ in rv.qubit_avg.items()},
            "real_meta": rv.meta, "ideal_meta": iv.meta,
        }
        if enumeration == "sampled":
            entry["delta_chi2_p"] = {
                repr(n): chi_square_uniform_p(rv.delta_histogram(n) * shots)
                for n in rv.measured_nodes
            }
        report["behaviors"][behavior.name] = entry
        worst = ViewDistance(max(worst.classical_tvd, dist.classical_tvd),
                             max(worst.quantum_trace_distance,
                                 dist.quantum_trace_distance))
    report["worst_classical_tvd"] = worst.classical_tvd
    report["worst_quantum_trace_distance"] = worst.quantum_trace_distance
    if negative_control:
        rv = real_view(public, alice_in, oscar_in, mode, HONEST, protocol,
                       "exhaustive", "runner", randomness_off=True)
        iv = simulator_view(public, alice_in, oscar_in, mode, HONEST, protocol,
                            enumeration, engine, shots, seed)
        dist = compare_views(rv, iv)
        report["negative_control_tvd"] = dist.classical_tvd
    return report


def chi_square_uniform_p(counts: np.ndarray) -> float:
    """P-value of a chi-square test against the uniform distribution."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    k = counts.size
    expected = total / k
    stat = float(((counts - expected) ** 2 / expected).sum())
    return _chi2_sf(stat, k - 1)


def _chi2_sf(x: float, df: int) -> float:
    return _gammaincc_upper(df / 2.0, x / 2.0)


def _gammaincc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError("bad arguments")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        # series for P(a,x), return 1 - P
        term = 1.0 / a
        summ = term
        ap = a
        for _ in range(500):
            ap += 1.0
            term *= x / ap
            summ += term
            if abs(term) < abs(summ) * 1e-15:
                break
        p = summ * math.exp(-x + a * math.log(x) - math.lgamma(a))
        return max(0.0, 1.0 - p)
    # continued fraction for Q(a,x)
    tiny = 1e-300
    b0 = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b0
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b0 += 2.0
        d = an * d + b0
        if abs(d) < tiny:
            d = tiny
        c = b0 + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
