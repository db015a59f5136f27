"""Estimator-style wrappers around the phase-estimation simulator.

``fit`` takes a Hamiltonian (``PauliHamiltonian`` or Hermitian array) in place
of a design matrix; fitted attributes carry a trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .numerics import eig_hermitian
from .rpe import RpeConfig, auto_tau, reconstruct_energies, run_rpe
from .validation import check_hamiltonian, check_pair, check_tau


def _resolve_tau(tau, eigenvalues) -> float:
    tau = check_tau(tau)
    return auto_tau(eigenvalues) if tau == "auto" else tau


class RobustPhaseEstimator(BaseEstimator):
    """Estimate one eigenvalue difference ``E_b - E_a``.

    Parameters
    ----------
    pair : tuple of int
        Eigenstate indices ``(a, b)`` in ascending-energy order.
    generations : int
    shots : int or None
        ``None`` uses exact outcome probabilities.
    seed : int or None
    tau : float or "auto"
    """

    def __init__(self, pair=(0, 1), generations=8, shots=None, seed=None, tau="auto"):
        self.pair = pair
        self.generations = generations
        self.shots = shots
        self.seed = seed
        self.tau = tau

    def fit(self, h, y=None):
        matrix = check_hamiltonian(h)
        spec = eig_hermitian(matrix)
        pair = check_pair(self.pair, spec.dim)
        self.tau_ = _resolve_tau(self.tau, spec.eigenvalues)
        config = RpeConfig(pair, self.generations, self.shots, self.seed, self.tau_)
        self.result_ = run_rpe(matrix, config)
        self.records_ = self.result_.records
        self.theta_ = self.result_.theta_final
        self.energy_difference_ = self.result_.energy_difference()
        return self

    def predict(self, X=None):
        check_is_fitted(self, "energy_difference_")
        return self.energy_difference_


class SpectrumEstimator(BaseEstimator):
    """All eigenvalues from the chain of adjacent differences plus the trace."""

    def __init__(self, generations=10, shots=None, seed=None, tau="auto"):
        self.generations = generations
        self.shots = shots
        self.seed = seed
        self.tau = tau

    def fit(self, h, y=None):
        matrix = check_hamiltonian(h)
        spec = eig_hermitian(matrix)
        self.tau_ = _resolve_tau(self.tau, spec.eigenvalues)
        seeds = np.random.SeedSequence(self.seed).spawn(spec.dim - 1)
        diffs = []
        for i, ss in enumerate(seeds):
            seed = None if self.shots is None else int(ss.generate_state(1)[0])
            result = run_rpe(matrix, RpeConfig((i, i + 1), self.generations, self.shots, seed, self.tau_))
            diffs.append(((i, i + 1), result.theta_final))
        self.differences_ = diffs
        trace = float(np.trace(matrix).real)
        self.energies_ = reconstruct_energies(diffs, trace, self.tau_, spec.dim, window="ordered")
        return self

    def predict(self, X=None):
        check_is_fitted(self, "energies_")
        return self.energies_
