"""Simulation laboratory for auxiliary-qubit-free robust phase estimation."""

__version__ = "0.1.0"

from .circuits import Circuit, Gate, ab_select, build_A, build_B, controlled_cost, prep_circuit, simulate
from .estimators import RobustPhaseEstimator, SpectrumEstimator
from .hamiltonians import PauliHamiltonian, load_hamiltonian, parse_hamiltonian, spectrum, to_dense
from .numerics import Spectrum, eig_hermitian, unitary_exp
from .robustness import (
    RobustnessGrid,
    brute_force_delta_lambda,
    delta_c_envelope,
    delta_s_envelope,
    f_max,
    success_region,
    worst_case_delta_lambda,
)
from .rpe import RpeConfig, RpeResult, estimate_phase, reconstruct_energies, run_rpe
from .spam import LeakageOverlap, SpamParams, exact_delta_c, exact_delta_s, exact_erroneous_probability

__all__ = [
    "Circuit",
    "Gate",
    "LeakageOverlap",
    "PauliHamiltonian",
    "RobustPhaseEstimator",
    "RobustnessGrid",
    "RpeConfig",
    "RpeResult",
    "SpamParams",
    "Spectrum",
    "SpectrumEstimator",
    "ab_select",
    "brute_force_delta_lambda",
    "build_A",
    "build_B",
    "controlled_cost",
    "delta_c_envelope",
    "delta_s_envelope",
    "eig_hermitian",
    "estimate_phase",
    "exact_delta_c",
    "exact_delta_s",
    "exact_erroneous_probability",
    "f_max",
    "load_hamiltonian",
    "parse_hamiltonian",
    "prep_circuit",
    "reconstruct_energies",
    "run_rpe",
    "simulate",
    "spectrum",
    "success_region",
    "to_dense",
    "unitary_exp",
    "worst_case_delta_lambda",
]
