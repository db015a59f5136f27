"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import math

import numpy as np

from .config import TOL
from .hamiltonians import PauliHamiltonian, to_dense
from .numerics import NotHermitian, as_square_matrix, hermiticity_error


def check_hamiltonian(h) -> np.ndarray:
    """Dense Hermitian matrix of power-of-two dimension from a PauliHamiltonian or array."""
    if isinstance(h, PauliHamiltonian):
        return to_dense(h)
    m = as_square_matrix(h)
    dim = m.shape[0]
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    err = hermiticity_error(m)
    if err > TOL.hermitian:
        raise NotHermitian(f"matrix is not Hermitian (error {err:.3e})")
    return m


def check_pair(pair, dim: int) -> tuple[int, int]:
    try:
        a, b = (int(i) for i in pair)
    except (TypeError, ValueError):
        raise ValueError(f"pair must hold two integers, got {pair!r}") from None
    if a == b:
        raise ValueError(f"pair indices must differ (both {a})")
    for i in (a, b):
        if not 0 <= i < dim:
            raise IndexError(f"index {i} out of range for dimension {dim}")
    return a, b


def check_amplitudes(eps_c: float, eps_l: float) -> tuple[float, float]:
    """Finite, non-negative amplitudes inside the unit budget."""
    eps_c, eps_l = float(eps_c), float(eps_l)
    if not (math.isfinite(eps_c) and math.isfinite(eps_l)):
        raise ValueError("amplitudes must be finite")
    if eps_c < 0 or eps_l < 0:
        raise ValueError("amplitudes must be non-negative")
    if eps_c**2 + eps_l**2 > 1 + 1e-15:
        raise ValueError(f"eps_c^2 + eps_l^2 = {eps_c**2 + eps_l**2:.6g} exceeds 1")
    return eps_c, eps_l


def check_tau(tau) -> float | str:
    if isinstance(tau, str):
        if tau != "auto":
            tau = float(tau)
        else:
            return tau
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError("tau must be finite and positive")
    return tau
