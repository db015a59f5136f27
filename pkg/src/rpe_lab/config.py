"""Repository-wide numerical tolerances.

Every threshold used by the library and its tests lives here so there is a
single place to audit them.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10
    reconstruction: float = 1e-9
    unitary: float = 1e-9
    norm: float = 1e-10
    orthonormal: float = 1e-10
    degenerate_components: float = 1e-12
    spam_norm: float = 1e-12
    leak_orthogonal: float = 1e-10
    inconsistent_differences: float = 1e-8
    root_imag: float = 1e-9
    root_clamp: float = 1e-12
    root_residual: float = 1e-8
    dense_lambda_samples: int = 1024
    max_qubits: int = 12


TOL = Tolerances()

# Additive-error tolerance of the phase estimator, per probability.
ADDITIVE_ERROR_BOUND = (3.0 / 32.0) ** 0.5
