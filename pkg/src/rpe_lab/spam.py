"""Coherent state-preparation-and-measurement (SPAM) error model.

The faulty preparation of ``(|E_a> + e^{i beta}|E_b>)/sqrt(2)`` is

    C/sqrt2 (|E_a> + e^{i beta}|E_b>) + eps_c e^{i eps_p}/sqrt2 (|E_a> - e^{i beta}|E_b>) + eps_l |l>

with ``C**2 = 1 - eps_c**2 - eps_l**2`` and ``|l>`` a unit vector orthogonal to
both eigenstates.  The un-preparation carries its own (primed) parameters.
Overlap of the two leak vectors after the evolution, with the global phase
of ``|E_a>`` removed, is ``u * exp(1j * phase_u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TOL
from .numerics import Spectrum


class SpamError(ValueError):
    pass


class AmplitudeBudgetExceeded(SpamError):
    pass


class LeakNotOrthogonal(SpamError):
    pass


def _budget(eps_c: float, eps_l: float) -> float:
    if eps_c < 0 or eps_l < 0:
        raise SpamError("error amplitudes must be non-negative")
    c2 = 1.0 - eps_c**2 - eps_l**2
    if c2 < -1e-15:
        raise AmplitudeBudgetExceeded(f"eps_c^2 + eps_l^2 = {eps_c**2 + eps_l**2:.6g} > 1")
    return math.sqrt(max(c2, 0.0))


@dataclass(frozen=True)
class SpamParams:
    eps_c: float = 0.0
    eps_p: float = 0.0
    eps_l: float = 0.0
    eps_c_prime: float = 0.0
    eps_p_prime: float = 0.0
    eps_l_prime: float = 0.0

    def __post_init__(self):
        _budget(self.eps_c, self.eps_l)
        _budget(self.eps_c_prime, self.eps_l_prime)

    @property
    def C(self) -> float:
        return _budget(self.eps_c, self.eps_l)

    @property
    def C_prime(self) -> float:
        return _budget(self.eps_c_prime, self.eps_l_prime)

    @property
    def A(self) -> complex:
        return self.C_prime * self.C + self.eps_c_prime * self.eps_c * np.exp(1j * (self.eps_p - self.eps_p_prime))

    @property
    def B(self) -> complex:
        return self.C * self.eps_c_prime * np.exp(-1j * self.eps_p_prime) + self.C_prime * self.eps_c * np.exp(
            1j * self.eps_p
        )


@dataclass(frozen=True)
class LeakageOverlap:
    u: float = 0.0
    phase_u: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise SpamError("leak overlap magnitude u must lie in [0, 1]")

    @property
    def value(self) -> complex:
        return self.u * np.exp(1j * self.phase_u)


def erroneous_prep_state(
    spec: Spectrum,
    a: int,
    b: int,
    beta: float,
    eps_c: float,
    eps_p: float,
    eps_l: float,
    leak_vector=None,
) -> np.ndarray:
    c = _budget(eps_c, eps_l)
    ea = spec.eigenvectors[:, a]
    eb = spec.eigenvectors[:, b] * np.exp(1j * beta)
    state = c / math.sqrt(2) * (ea + eb) + eps_c * np.exp(1j * eps_p) / math.sqrt(2) * (ea - eb)
    if eps_l > 0:
        if leak_vector is None:
            raise LeakNotOrthogonal("a leak vector is required when eps_l > 0")
        leak = np.asarray(leak_vector, dtype=complex)
        if abs(np.linalg.norm(leak) - 1.0) > TOL.leak_orthogonal:
            raise LeakNotOrthogonal("leak vector must have unit norm")
        overlap = max(abs(np.vdot(ea, leak)), abs(np.vdot(spec.eigenvectors[:, b], leak)))
        if overlap > TOL.leak_orthogonal:
            raise LeakNotOrthogonal(f"leak vector overlaps the target subspace ({overlap:.3e})")
        state = state + eps_l * leak
    return state


def subspace_overlap(lam, params: SpamParams) -> complex:
    """In-subspace part of ``<chi(0); primed | chi(lam); unprimed>``."""
    e = np.exp(1j * np.asarray(lam))
    return 0.5 * params.A * (1 + e) + 0.5 * params.B * (1 - e)


def exact_erroneous_probability(lam, params: SpamParams, overlap: LeakageOverlap):
    """Closed-form faulty outcome probability at phase ``lam``."""
    lam = np.asarray(lam, dtype=float)
    A, B = params.A, params.B
    D = params.eps_l * params.eps_l_prime
    c, s = np.cos(lam), np.sin(lam)
    in_subspace = 0.5 * abs(A) ** 2 * (1 + c) + 0.5 * abs(B) ** 2 * (1 - c) - (A * np.conj(B)).imag * s
    x = subspace_overlap(lam, params)
    leak = 2.0 * D * np.real(np.conj(x) * overlap.value) + (D * overlap.u) ** 2
    return np.clip(in_subspace + leak, 0.0, 1.0)


def exact_delta_c(lam, params: SpamParams, overlap: LeakageOverlap):
    return 2.0 * exact_erroneous_probability(lam, params, overlap) - 1.0 - np.cos(lam)


def exact_delta_s(lam, params: SpamParams, overlap: LeakageOverlap):
    # the sine circuit's faulty probability is the cosine one shifted by pi/2
    return exact_delta_c(np.asarray(lam) - math.pi / 2, params, overlap)


def complement_basis(spec: Spectrum, a: int, b: int) -> np.ndarray:
    """Orthonormal basis (as columns) of the complement of ``span{E_a, E_b}``."""
    others = [i for i in range(spec.dim) if i not in (a, b)]
    return spec.eigenvectors[:, others]


def _random_unit(basis: np.ndarray, rng: np.random.Generator | None, exclude=None) -> np.ndarray:
    k = basis.shape[1]
    for attempt in range(16):
        if rng is None:
            coef = np.zeros(k, dtype=complex)
            coef[attempt % k] = 1.0
        else:
            coef = rng.normal(size=k) + 1j * rng.normal(size=k)
        v = basis @ coef
        if exclude is not None:
            v = v - np.vdot(exclude, v) * exclude
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm
    raise SpamError("could not construct a leak vector")


def leak_vectors(
    spec: Spectrum,
    a: int,
    b: int,
    overlap: LeakageOverlap,
    evolution: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Prepare/unprepare leak vectors realizing the requested overlap.

    With ``evolution = W^k`` the realized overlap is
    ``e^{-i phi_a} <l'| W^k |l>``, ``e^{i phi_a}`` being the eigenphase of
    ``W^k`` on ``|E_a>``.  Without ``rng`` the vectors are complement
    eigenvectors; with it they are random directions in the complement.
    """
    basis = complement_basis(spec, a, b)
    if basis.shape[1] == 0:
        raise SpamError("no room for leakage: the register only spans the target pair")
    leak = _random_unit(basis, rng)
    if evolution is None:
        moved = leak
    else:
        ea = spec.eigenvectors[:, a]
        phase_a = np.vdot(ea, evolution @ ea)
        moved = np.conj(phase_a) / abs(phase_a) * (evolution @ leak)
    leak_prime = overlap.u * np.exp(-1j * overlap.phase_u) * moved
    if overlap.u < 1.0:
        if basis.shape[1] < 2:
            raise SpamError("u < 1 needs at least two leak directions (N >= 4)")
        leak_prime = leak_prime + math.sqrt(1.0 - overlap.u**2) * _random_unit(basis, rng, exclude=moved)
    return leak, leak_prime


def statevector_probabilities(
    spec: Spectrum,
    a: int,
    b: int,
    evolution: np.ndarray,
    params: SpamParams,
    overlap: LeakageOverlap,
    rng: np.random.Generator | None = None,
) -> tuple[float, float, float]:
    """Brute-force faulty ``(P_c, P_s, lam)`` by explicit state overlaps.

    Independent of the closed form: builds the faulty states, applies the
    evolution and takes inner products.  ``lam`` is the ideal phase
    difference accumulated between ``|E_a>`` and ``|E_b>``.
    """
    leak, leak_prime = leak_vectors(spec, a, b, overlap, evolution, rng)
    prep = erroneous_prep_state(spec, a, b, 0.0, params.eps_c, params.eps_p, params.eps_l, leak)
    evolved = evolution @ prep
    out = []
    for beta in (0.0, math.pi / 2):
        unprep = erroneous_prep_state(
            spec, a, b, beta, params.eps_c_prime, params.eps_p_prime, params.eps_l_prime, leak_prime
        )
        out.append(abs(np.vdot(unprep, evolved)) ** 2)
    ea, eb = spec.eigenvectors[:, a], spec.eigenvectors[:, b]
    lam = float(np.angle(np.vdot(eb, evolution @ eb) * np.conj(np.vdot(ea, evolution @ ea))))
    return out[0], out[1], lam % (2 * math.pi)


def spam_probability_oracle(theta: float, params: SpamParams, overlap: LeakageOverlap):
    """``k -> (P_c, P_s)`` under the SPAM model, for driving the estimator."""

    def oracle(k: int):
        lam = k * theta
        return (
            float(exact_erroneous_probability(lam, params, overlap)),
            float(exact_erroneous_probability(lam - math.pi / 2, params, overlap)),
        )

    return oracle
