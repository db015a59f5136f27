"""Pauli-sum Hamiltonians: text ingestion, serialization and dense realization.

Qubit ordering: qubit 0 is the least-significant bit of the computational
basis index, so the leftmost character of a Pauli word acts on qubit n-1.

File format (UTF-8)::

    # comment
    label H2 at 0.75 A
    II  -0.48
    ZI   0.34

Repeated words are merged by summing their coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from pathlib import Path

import numpy as np

from .config import TOL
from .numerics import Spectrum, eig_hermitian

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class HamiltonianError(ValueError):
    pass


class MalformedLine(HamiltonianError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class InconsistentWordLength(HamiltonianError):
    def __init__(self, lineno: int, expected: int, got: int):
        super().__init__(f"line {lineno}: Pauli word has length {got}, expected {expected}")
        self.lineno = lineno


class EmptyInput(HamiltonianError):
    pass


class DimensionTooLarge(HamiltonianError):
    pass


@dataclass(frozen=True)
class PauliTerm:
    word: str
    coefficient: float

    def __post_init__(self):
        if not self.word or set(self.word) - set(PAULI_MATRICES):
            raise HamiltonianError(f"invalid Pauli word {self.word!r}")
        if not np.isfinite(self.coefficient):
            raise HamiltonianError(f"non-finite coefficient for {self.word}")


@dataclass(frozen=True)
class PauliHamiltonian:
    n_qubits: int
    terms: tuple[PauliTerm, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise HamiltonianError("n_qubits must be positive")
        words = [t.word for t in self.terms]
        if any(len(w) != self.n_qubits for w in words):
            raise HamiltonianError("all Pauli words must have length n_qubits")
        if len(set(words)) != len(words):
            raise HamiltonianError("duplicate Pauli words; use from_terms to merge")

    @classmethod
    def from_terms(cls, terms, label: str = "") -> "PauliHamiltonian":
        """Build from ``(word, coefficient)`` pairs, merging repeated words."""
        merged: dict[str, float] = {}
        for word, coef in terms:
            merged[word] = merged.get(word, 0.0) + float(coef)
        if not merged:
            raise EmptyInput("no Pauli terms")
        n = len(next(iter(merged)))
        return cls(n, tuple(PauliTerm(w, c) for w, c in sorted(merged.items())), label)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def coefficient(self, word: str) -> float:
        for t in self.terms:
            if t.word == word:
                return t.coefficient
        return 0.0


def parse_hamiltonian(text: str) -> PauliHamiltonian:
    label = ""
    merged: dict[str, float] = {}
    n = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("label"):
            head, _, rest = line.partition(" ")
            if head == "label":
                label = rest.strip()
                continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(lineno, raw, "expected '<PauliWord> <coefficient>'")
        word, coef_text = parts
        word = word.upper()
        if set(word) - set(PAULI_MATRICES):
            raise MalformedLine(lineno, raw, "Pauli word must use only I, X, Y, Z")
        try:
            coef = float(coef_text)
        except ValueError:
            raise MalformedLine(lineno, raw, "coefficient is not a real decimal number") from None
        if not np.isfinite(coef):
            raise MalformedLine(lineno, raw, "coefficient is not finite")
        if n is None:
            n = len(word)
        elif len(word) != n:
            raise InconsistentWordLength(lineno, n, len(word))
        merged[word] = merged.get(word, 0.0) + coef
    if not merged:
        raise EmptyInput("no Pauli terms found")
    return PauliHamiltonian(n, tuple(PauliTerm(w, c) for w, c in sorted(merged.items())), label)


def load_hamiltonian(path) -> PauliHamiltonian:
    return parse_hamiltonian(Path(path).read_text(encoding="utf-8"))


def serialize_hamiltonian(h: PauliHamiltonian) -> str:
    lines = [f"label {h.label}"] if h.label else []
    for t in sorted(h.terms, key=lambda t: t.word):
        lines.append(f"{t.word} {t.coefficient:.17g}")
    return "\n".join(lines) + "\n"


def pauli_word_matrix(word: str) -> np.ndarray:
    return reduce(np.kron, (PAULI_MATRICES[ch] for ch in word))


def to_dense(h: PauliHamiltonian) -> np.ndarray:
    if h.n_qubits > TOL.max_qubits:
        raise DimensionTooLarge(f"{h.n_qubits} qubits exceeds the dense limit of {TOL.max_qubits}")
    m = np.zeros((h.dim, h.dim), dtype=complex)
    for t in h.terms:
        m += t.coefficient * pauli_word_matrix(t.word)
    return m


def trace(h: PauliHamiltonian) -> float:
    return h.dim * h.coefficient("I" * h.n_qubits)


def spectrum(h: PauliHamiltonian) -> Spectrum:
    return eig_hermitian(to_dense(h))


def random_hamiltonian(n_qubits: int, rng: np.random.Generator, n_terms: int | None = None) -> PauliHamiltonian:
    """Random real Pauli sum, mainly for tests and studies."""
    words = ["".join(p) for p in product("IXYZ", repeat=n_qubits)]
    if n_terms is not None and n_terms < len(words):
        words = list(rng.choice(words, size=n_terms, replace=False))
    return PauliHamiltonian.from_terms((w, rng.normal()) for w in words)
