"""Gate-level circuits, preparation-circuit synthesis and a statevector simulator.

Conventions
-----------
* Qubit 0 is the least-significant bit of the basis index.
* ``PHASE(q, beta)`` is ``diag(1, exp(1j * beta))`` on qubit ``q``.
* A ``DENSE`` gate on qubits ``[q0, q1, ...]`` uses ``q0`` as the
  least-significant bit of its own matrix index.

Text format, one gate per line after a ``qubits n`` header::

    qubits 2
    H 0
    PHASE 0 1.5707963267948966
    CNOT 0 1
    DENSE [0 1] (1+0j) 0j ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TOL
from .numerics import DimensionMismatch, NotUnitary, Spectrum, basis_state, unitarity_error

GATE_KINDS = ("X", "H", "PHASE", "CNOT", "DENSE")

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class CircuitError(ValueError):
    pass


class EqualIndices(CircuitError):
    pass


class IndexOutOfRange(CircuitError):
    pass


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if any(q < 0 for q in self.qubits) or len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.kind}: qubits must be distinct and non-negative")
        arity = {"X": 1, "H": 1, "PHASE": 1, "CNOT": 2}.get(self.kind)
        if arity is not None and len(self.qubits) != arity:
            raise CircuitError(f"{self.kind} acts on {arity} qubit(s)")
        if self.kind == "DENSE":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2 ** len(self.qubits),) * 2:
                raise CircuitError("DENSE matrix dimension must be 2**len(qubits)")
            if unitarity_error(m) > TOL.unitary:
                raise NotUnitary("DENSE matrix is not unitary")
            object.__setattr__(self, "matrix", m)

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        same = (self.kind, self.qubits, self.angle) == (other.kind, other.qubits, other.angle)
        if self.kind == "DENSE":
            return same and np.array_equal(self.matrix, other.matrix)
        return same

    __hash__ = None

    def unitary(self) -> np.ndarray:
        """Matrix of the gate on its own qubits (first qubit least significant)."""
        if self.kind == "X":
            return _X
        if self.kind == "H":
            return _H
        if self.kind == "PHASE":
            return np.diag([1.0, np.exp(1j * self.angle)])
        if self.kind == "CNOT":
            # local index = control + 2 * target
            return np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
        return self.matrix

    def to_text(self) -> str:
        if self.kind == "PHASE":
            return f"PHASE {self.qubits[0]} {self.angle!r}"
        if self.kind == "DENSE":
            qs = " ".join(map(str, self.qubits))
            entries = " ".join(repr(complex(z)) for z in self.matrix.ravel())
            return f"DENSE [{qs}] {entries}"
        return " ".join([self.kind, *map(str, self.qubits)])


def X(q: int) -> Gate:
    return Gate("X", (q,))


def H(q: int) -> Gate:
    return Gate("H", (q,))


def PHASE(q: int, angle: float) -> Gate:
    return Gate("PHASE", (q,), float(angle))


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


def DENSE(matrix, qubits) -> Gate:
    return Gate("DENSE", tuple(qubits), matrix=matrix)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise CircuitError(f"{g.kind} on qubit {max(g.qubits)} outside {self.n_qubits}-qubit register")

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise DimensionMismatch("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def __len__(self):
        return len(self.gates)

    def to_text(self) -> str:
        return "\n".join([f"qubits {self.n_qubits}", *(g.to_text() for g in self.gates)]) + "\n"

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)


def parse_circuit(text: str) -> Circuit:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("qubits "):
        raise CircuitError("circuit text must start with 'qubits n'")
    n = int(lines[0].split()[1])
    gates = []
    for ln in lines[1:]:
        kind, _, rest = ln.partition(" ")
        if kind == "DENSE":
            qs, _, entries = rest.partition("]")
            qubits = [int(q) for q in qs.strip("[ ").split()]
            vals = np.array([complex(e) for e in entries.split()])
            dim = 2 ** len(qubits)
            gates.append(DENSE(vals.reshape(dim, dim), qubits))
        elif kind == "PHASE":
            q, angle = rest.split()
            gates.append(PHASE(int(q), float(angle)))
        elif kind in ("X", "H", "CNOT"):
            gates.append(Gate(kind, tuple(int(q) for q in rest.split())))
        else:
            raise CircuitError(f"unknown gate line {ln!r}")
    return Circuit(n, tuple(gates))


def _apply_gate(state: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    k = len(gate.qubits)
    # tensor axis i holds qubit n-1-i (C order, qubit 0 least significant)
    psi = state.reshape((2,) * n)
    axes = [n - 1 - q for q in reversed(gate.qubits)]
    u = gate.unitary().reshape((2,) * (2 * k))
    out = np.tensordot(u, psi, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


def simulate(circuit: Circuit, initial=None) -> np.ndarray:
    """Apply ``circuit`` to ``initial`` (default ``|0...0>``)."""
    dim = 2**circuit.n_qubits
    state = basis_state(dim, 0) if initial is None else np.array(initial, dtype=complex)
    if state.shape != (dim,):
        raise DimensionMismatch(f"state of length {state.shape} for a {circuit.n_qubits}-qubit circuit")
    for g in circuit.gates:
        state = _apply_gate(state, g, circuit.n_qubits)
    return state


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    dim = 2**circuit.n_qubits
    return np.stack([simulate(circuit, basis_state(dim, i)) for i in range(dim)], axis=1)


def inverse(circuit: Circuit) -> Circuit:
    inv = []
    for g in reversed(circuit.gates):
        if g.kind == "PHASE":
            inv.append(PHASE(g.qubits[0], -g.angle))
        elif g.kind == "DENSE":
            inv.append(DENSE(g.matrix.conj().T, g.qubits))
        else:
            inv.append(g)
    return Circuit(circuit.n_qubits, tuple(inv))


def _check_pair(a: int, b: int, n: int):
    if n < 1:
        raise CircuitError("register needs at least one qubit")
    for idx in (a, b):
        if not 0 <= idx < 2**n:
            raise IndexOutOfRange(f"basis index {idx} out of range for {n} qubits")
    if a == b:
        raise EqualIndices(f"a and b must differ (both {a})")


def ab_select(a: int, b: int, n: int) -> tuple[Circuit, int]:
    """X/CNOT circuit ``T`` and control qubit ``j`` with ``T|0> = |a>``, ``T|2^j> = |b>``.

    ``j`` is the lowest bit in which ``a`` and ``b`` differ.
    """
    _check_pair(a, b, n)
    gates: list[Gate] = []
    j = -1
    flip = False
    for i in range(n):
        ai, bi = (a >> i) & 1, (b >> i) & 1
        if ai == bi:
            if ai:
                gates.append(X(i))
        elif j == -1:
            j = i
            flip = bi == 0
        else:
            gates.append(CNOT(j, i))
            if ai:
                gates.append(X(i))
    if flip:
        gates.append(X(j))
    return Circuit(n, tuple(gates)), j


def build_B(a: int, b: int, beta: float, n: int) -> Circuit:
    """Circuit taking ``|0>`` to ``(|a> + exp(1j*beta)|b>) / sqrt(2)``."""
    select, j = ab_select(a, b, n)
    return Circuit(n, (H(j), PHASE(j, beta))) + select


def _phase_fixed_columns(vecs: np.ndarray) -> np.ndarray:
    out = np.array(vecs, dtype=complex, copy=True)
    for col in range(out.shape[1]):
        mags = np.abs(out[:, col])
        # lowest index among (numerically) tied maxima
        pivot = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
        out[:, col] *= np.conj(out[pivot, col]) / mags[pivot]
    return out


def phase_fixed_eigenvectors(spec: Spectrum) -> np.ndarray:
    """Eigenvectors under the convention used by ``build_A``.

    Superpositions prepared by ``prep_circuit`` carry their relative phase
    with respect to these columns.
    """
    return _phase_fixed_columns(np.asarray(spec.eigenvectors, dtype=complex))


def build_A(spec: Spectrum) -> Gate:
    """Dense basis change whose i-th column is eigenvector i (phase-fixed)."""
    vecs = np.asarray(spec.eigenvectors, dtype=complex)
    err = unitarity_error(vecs)
    if err > TOL.orthonormal:
        raise NotUnitary(f"eigenvector columns not orthonormal (error {err:.3e})")
    n = int(round(np.log2(vecs.shape[0])))
    if 2**n != vecs.shape[0]:
        raise DimensionMismatch("spectrum dimension is not a power of two")
    return DENSE(_phase_fixed_columns(vecs), range(n))


def prep_circuit(spec: Spectrum, a: int, b: int, beta: float) -> Circuit:
    """Full preparation ``A(H) B(a, b, beta)`` of ``(|E_a> + e^{i beta}|E_b>)/sqrt(2)``."""
    a_gate = build_A(spec)
    n = len(a_gate.qubits)
    return build_B(a, b, beta, n) + Circuit(n, (a_gate,))


def controlled_cost(singles: int, cnots: int) -> int:
    """Worst-case CNOT count of the singly-controlled version of a circuit."""
    if singles < 0 or cnots < 0:
        raise ValueError("gate counts must be non-negative")
    return 6 * cnots + 2 * singles
