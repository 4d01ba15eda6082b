"""Exact statevector backend with dynamic qubit allocation.

The register holds named qubits; measured qubits are physically removed
(the index is compacted), which is what makes the lazy scheduler's
qubit-count claims measurable.  Measurement outcomes come from an explicit
outcome source, either seeded sampling or branch forcing, so that channels
can be computed by exact enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .angles import DyadicAngle

ATOL_UNITARY = 1e-12
ATOL_STATE = 1e-9
ZERO_BRANCH_TOL = 1e-13
_SQRT2_INV = 1.0 / math.sqrt(2.0)


class RegisterError(ValueError):
    """Raised on allocation/ownership misuse of the register."""


def _radians(angle: Union[DyadicAngle, float]) -> float:
    return angle.radians if isinstance(angle, DyadicAngle) else float(angle)


# -- outcome sources --------------------------------------------------------


class SeededOutcomes:
    """Samples measurement outcomes with a private numpy Generator."""

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)

    def choose(self, node, p0: float) -> int:
        return 0 if self._rng.random() < p0 else 1


class ForcedOutcomes:
    """Forces measurement branches, recording the forced branch probability.

    Accepts a mapping node -> bit or a flat sequence consumed in call
    order.  ``branch_probability`` accumulates the product of the Born
    probabilities of the forced branches.
    """

    def __init__(self, outcomes: Union[Mapping, Sequence[int]]):
        if isinstance(outcomes, Mapping):
            self._map = dict(outcomes)
            self._seq = None
        else:
            self._map = None
            self._seq = list(outcomes)
        self._cursor = 0
        self.branch_probability = 1.0
        self.hit_zero_branch = False

    def choose(self, node, p0: float) -> int:
        if self._map is not None:
            bit = int(self._map[node]) & 1
        else:
            bit = int(self._seq[self._cursor]) & 1
            self._cursor += 1
        p = p0 if bit == 0 else 1.0 - p0
        if p <= ZERO_BRANCH_TOL:
            self.hit_zero_branch = True
            p = 0.0
        self.branch_probability *= p
        return bit


@dataclass(frozen=True)
class MeasureResult:
    node: object
    outcome: int
    probability: float


# -- the register ------------------------------------------------------------


class QuantumRegister:
    """Complex amplitudes over a dynamic set of named qubits."""

    def __init__(self):
        self._nodes: list = []
        self._amps = np.ones(1, dtype=np.complex128)
        self.valid = True

    # construction helpers

    @classmethod
    def from_state(cls, nodes: Sequence, amplitudes: np.ndarray) -> QuantumRegister:
        reg = cls()
        reg.alloc_state(nodes, amplitudes)
        return reg

    def copy(self) -> QuantumRegister:
        reg = QuantumRegister()
        reg._nodes = list(self._nodes)
        reg._amps = self._amps.copy()
        reg.valid = self.valid
        return reg

    # bookkeeping

    @property
    def nodes(self) -> tuple:
        return tuple(self._nodes)

    @property
    def num_qubits(self) -> int:
        return len(self._nodes)

    def __contains__(self, node) -> bool:
        return node in self._nodes

    def _axis(self, node) -> int:
        try:
            return self._nodes.index(node)
        except ValueError:
            raise RegisterError(f"node {node!r} is not allocated") from None

    def _view(self) -> np.ndarray:
        return self._amps.reshape((2,) * len(self._nodes))

    def norm(self) -> float:
        return float(np.linalg.norm(self._amps))

    # allocation

    def alloc_plus(self, node, theta: Union[DyadicAngle, float] = 0.0) -> None:
        """Append one qubit in (|0> + e^{i theta} |1>)/sqrt(2)."""
        phase = np.exp(1j * _radians(theta))
        self.alloc_state([node], np.array([_SQRT2_INV, _SQRT2_INV * phase]))

    def alloc_computational(self, node, bit: int) -> None:
        vec = np.zeros(2, dtype=np.complex128)
        vec[bit & 1] = 1.0
        self.alloc_state([node], vec)

    def alloc_bell(self, node_a, node_b) -> None:
        """Append an EPR pair (|00> + |11>)/sqrt(2)."""
        vec = np.zeros(4, dtype=np.complex128)
        vec[0] = vec[3] = _SQRT2_INV
        self.alloc_state([node_a, node_b], vec)

    def alloc_state(self, nodes: Sequence, amplitudes: np.ndarray) -> None:
        nodes = list(nodes)
        for node in nodes:
            if node in self._nodes:
                raise RegisterError(f"node {node!r} already allocated")
        if len(set(nodes)) != len(nodes):
            raise RegisterError("duplicate node in allocation")
        vec = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if vec.size != 1 << len(nodes):
            raise RegisterError("amplitude vector size mismatch")
        self._amps = np.kron(self._amps, vec)
        self._nodes.extend(nodes)

    # gates

    def apply_phase(self, node, theta: Union[DyadicAngle, float]) -> None:
        """Z-rotation diag(1, e^{i theta}) on one qubit."""
        ax = self._axis(node)
        view = self._view()
        idx = [slice(None)] * len(self._nodes)
        idx[ax] = 1
        view[tuple(idx)] *= np.exp(1j * _radians(theta))

    # protocol naming: the rotation used for pads and corrections
    apply_z_rotation = apply_phase

    def apply_x(self, node) -> None:
        ax = self._axis(node)
        self._amps = np.flip(self._view(), axis=ax).reshape(-1)

    def apply_z(self, node) -> None:
        self.apply_phase(node, math.pi)

    def apply_correction(self, node, sx: int, sz: int) -> None:
        """X**sx then Z**sz, the byproduct operator of the calculus."""
        if sx & 1:
            self.apply_x(node)
        if sz & 1:
            self.apply_z(node)

    def apply_one_time_pad(self, node, alpha: Union[DyadicAngle, float],
                           t: int) -> None:
        """The client-side encryption Z(alpha) X**t, X first."""
        if t & 1:
            self.apply_x(node)
        self.apply_phase(node, alpha)

    def apply_cz(self, node_a, node_b) -> None:
        if node_a == node_b:
            raise RegisterError("CZ needs two distinct qubits")
        ai, bi = self._axis(node_a), self._axis(node_b)
        view = self._view()
        idx = [slice(None)] * len(self._nodes)
        idx[ai] = 1
        idx[bi] = 1
        view[tuple(idx)] *= -1.0

    def apply_cnot(self, control, target) -> None:
        ci, ti = self._axis(control), self._axis(target)
        view = self._view()
        idx0 = [slice(None)] * len(self._nodes)
        idx0[ci] = 1
        idx1 = list(idx0)
        idx0[ti] = 0
        idx1[ti] = 1
        a = view[tuple(idx0)].copy()
        view[tuple(idx0)] = view[tuple(idx1)]
        view[tuple(idx1)] = a

    def apply_hadamard(self, node) -> None:
        ax = self._axis(node)
        view = self._view()
        idx0 = [slice(None)] * len(self._nodes)
        idx1 = list(idx0)
        idx0[ax] = 0
        idx1[ax] = 1
        a = view[tuple(idx0)].copy()
        b = view[tuple(idx1)].copy()
        view[tuple(idx0)] = (a + b) * _SQRT2_INV
        view[tuple(idx1)] = (a - b) * _SQRT2_INV

    # measurement

    def _split(self, node) -> tuple[np.ndarray, np.ndarray]:
        ax = self._axis(node)
        view = self._view()
        idx0 = [slice(None)] * len(self._nodes)
        idx1 = list(idx0)
        idx0[ax] = 0
        idx1[ax] = 1
        return view[tuple(idx0)], view[tuple(idx1)]

    def measure_angle(self, node, delta: Union[DyadicAngle, float],
                      outcome_source) -> MeasureResult:
        """Project onto |+_delta> (0) or |+_{delta+pi}> (1) and drop the qubit.

        A forced zero-probability branch leaves the register flagged
        invalid with probability 0 reported.
        """
        v0, v1 = self._split(node)
        phase = np.exp(-1j * _radians(delta))
        branch0 = (v0 + phase * v1) * _SQRT2_INV
        p0 = float(np.vdot(branch0, branch0).real)
        p0 = min(max(p0, 0.0), 1.0)
        bit = outcome_source.choose(node, p0)
        if bit == 0:
            branch, p = branch0, p0
        else:
            branch = (v0 - phase * v1) * _SQRT2_INV
            p = 1.0 - p0
        if p <= ZERO_BRANCH_TOL:
            p = 0.0
        self._drop(node, branch, p)
        return MeasureResult(node, bit, p)

    def measure_z(self, node, outcome_source) -> MeasureResult:
        """Computational-basis measurement; drops the qubit."""
        v0, v1 = self._split(node)
        p0 = float(np.vdot(v0, v0).real)
        p0 = min(max(p0, 0.0), 1.0)
        bit = outcome_source.choose(node, p0)
        branch = v0 if bit == 0 else v1
        p = p0 if bit == 0 else 1.0 - p0
        self._drop(node, branch.copy(), p)
        return MeasureResult(node, bit, p)

    def project_plus_bra(self, node, delta: Union[DyadicAngle, float]) -> None:
        """Contract <+_delta| without renormalizing; for isometry building."""
        v0, v1 = self._split(node)
        phase = np.exp(-1j * _radians(delta))
        branch = (v0 + phase * v1) * _SQRT2_INV
        ax = self._axis(node)
        self._nodes.pop(ax)
        self._amps = np.ascontiguousarray(branch).reshape(-1)

    def _drop(self, node, branch: np.ndarray, p: float) -> None:
        ax = self._axis(node)
        self._nodes.pop(ax)
        if p > ZERO_BRANCH_TOL:
            self._amps = (branch / math.sqrt(p)).reshape(-1)
        else:
            self._amps = np.zeros_like(branch).reshape(-1)
            self.valid = False

    def free(self, node) -> None:
        """Discard a qubit that is in a product state with the rest."""
        v0, v1 = self._split(node)
        mat = np.stack([v0.reshape(-1), v1.reshape(-1)])
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        if s.size > 1 and s[1] > 1e-9:
            raise RegisterError(f"node {node!r} is still entangled")
        ax = self._axis(node)
        self._nodes.pop(ax)
        self._amps = (vh[0] * s[0] / np.linalg.norm(s)).reshape(-1)

    # readout

    def statevector(self, node_order: Optional[Sequence] = None) -> np.ndarray:
        order = list(node_order) if node_order is not None else list(self._nodes)
        if set(order) != set(self._nodes):
            raise RegisterError("node_order must cover exactly the register")
        perm = [self._nodes.index(n) for n in order]
        return np.transpose(self._view(), perm).reshape(-1).copy()

    def reduced_density(self, nodes: Sequence) -> DensityMatrix:
        nodes = list(nodes)
        for n in nodes:
            self._axis(n)
        rest = [n for n in self._nodes if n not in nodes]
        vec = np.transpose(
            self._view(),
            [self._nodes.index(n) for n in nodes + rest],
        ).reshape(1 << len(nodes), 1 << len(rest))
        mat = vec @ vec.conj().T
        return DensityMatrix(tuple(nodes), mat)


# -- density matrices --------------------------------------------------------


@dataclass
class DensityMatrix:
    """Hermitian unit-trace matrix over named qubits."""

    nodes: tuple
    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.nodes = tuple(self.nodes)
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        dim = 1 << len(self.nodes)
        if self.matrix.shape != (dim, dim):
            raise ValueError("density matrix shape mismatch")

    def check(self, atol: float = 1e-10) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=atol):
            raise ValueError("not Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-9:
            raise ValueError("trace is not 1")
        if np.linalg.eigvalsh(m).min() < -atol:
            raise ValueError("not positive semidefinite")

    def permuted(self, node_order: Sequence) -> DensityMatrix:
        order = list(node_order)
        if set(order) != set(self.nodes):
            raise ValueError("node sets differ")
        n = len(self.nodes)
        perm = [self.nodes.index(x) for x in order]
        t = self.matrix.reshape((2,) * (2 * n))
        t = np.transpose(t, perm + [n + p for p in perm])
        return DensityMatrix(tuple(order), t.reshape(self.matrix.shape))

    def trace_distance(self, other: DensityMatrix) -> float:
        other = other.permuted(self.nodes) if other.nodes != self.nodes else other
        eig = np.linalg.eigvalsh(self.matrix - other.matrix)
        return float(0.5 * np.abs(eig).sum())

    def to_json(self) -> dict:
        return {
            "nodes": [repr(n) for n in self.nodes],
            "matrix": [[[float(z.real), float(z.imag)] for z in row]
                       for row in self.matrix],
        }


def ensemble_average(parts: Iterable[tuple[float, DensityMatrix]]) -> DensityMatrix:
    """Probability-weighted matrix average; weights need not be normalized."""
    total = 0.0
    acc = None
    nodes = None
    for p, dm in parts:
        if nodes is None:
            nodes = dm.nodes
            acc = np.zeros_like(dm.matrix)
        acc += p * dm.permuted(nodes).matrix
        total += p
    if acc is None:
        raise ValueError("empty ensemble")
    return DensityMatrix(nodes, acc / total)


def maximally_mixed(nodes: Sequence) -> DensityMatrix:
    dim = 1 << len(tuple(nodes))
    return DensityMatrix(tuple(nodes), np.eye(dim, dtype=np.complex128) / dim)


# -- comparisons -------------------------------------------------------------


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 for normalized vectors; global-phase insensitive."""
    return float(abs(np.vdot(np.asarray(a).reshape(-1),
                             np.asarray(b).reshape(-1))) ** 2)


def states_equal(a: np.ndarray, b: np.ndarray, atol: float = ATOL_STATE) -> bool:
    return fidelity(a, b) > 1.0 - atol
