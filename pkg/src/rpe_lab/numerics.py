"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays. Dimensions are small (at most a few
thousand), so everything is dense.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import TOL


class NotHermitian(ValueError):
    pass


class ConvergenceFailure(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"eigendecomposition residual {residual:.3e} exceeds tolerance")
        self.residual = residual


class DimensionMismatch(ValueError):
    pass


class NotUnitary(ValueError):
    pass


class Spectrum(NamedTuple):
    """Ascending eigenvalues and the matching eigenvectors (as columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def as_square_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def eig_hermitian(m) -> Spectrum:
    m = as_square_matrix(m)
    err = hermiticity_error(m)
    if err > TOL.hermitian:
        raise NotHermitian(f"max |m - m^dagger| = {err:.3e}")
    # symmetrize so round-off in the input cannot leak into eigh
    h = 0.5 * (m + m.conj().T)
    vals, vecs = np.linalg.eigh(h)
    recon = (vecs * vals) @ vecs.conj().T
    residual = float(np.max(np.abs(recon - m))) if m.size else 0.0
    scale = 1.0 + (float(np.max(np.abs(m))) if m.size else 0.0)
    if residual > TOL.reconstruction * scale:
        raise ConvergenceFailure(residual)
    return Spectrum(vals, vecs)


def unitary_exp(m, scale: float, spectrum: Spectrum | None = None) -> np.ndarray:
    """Return ``exp(-1j * scale * m)`` for Hermitian ``m``.

    A precomputed ``spectrum`` of ``m`` may be passed to skip the
    eigendecomposition when exponentiating the same matrix repeatedly.
    """
    spec = spectrum if spectrum is not None else eig_hermitian(m)
    vals, vecs = spec
    return (vecs * np.exp(-1j * scale * vals)) @ vecs.conj().T


def unitarity_error(u: np.ndarray) -> float:
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def check_unitary(u, tol: float = TOL.unitary) -> np.ndarray:
    u = as_square_matrix(u)
    err = unitarity_error(u)
    if err > tol:
        raise NotUnitary(f"max |u^dagger u - I| = {err:.3e}")
    return u


def basis_state(dim: int, index: int = 0) -> np.ndarray:
    if not 0 <= index < dim:
        raise IndexError(f"basis index {index} out of range for dimension {dim}")
    s = np.zeros(dim, dtype=complex)
    s[index] = 1.0
    return s


def apply(u, state, check: bool = True) -> np.ndarray:
    """Apply a unitary to a state vector."""
    u = np.asarray(u, dtype=complex)
    state = np.asarray(state, dtype=complex)
    if u.ndim != 2 or u.shape[1] != state.shape[0]:
        raise DimensionMismatch(f"cannot apply {u.shape} matrix to state of length {state.shape[0]}")
    if check:
        check_unitary(u)
    return u @ state
