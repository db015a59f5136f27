"""Multi-generation robust phase estimation of eigenvalue differences.

Generation ``g`` applies ``W = exp(-i tau H)`` ``k_g = 2**g`` times between a
preparation of ``(|E_a> + e^{i beta}|E_b>)/sqrt(2)`` and the inverse
preparation with ``beta = 0``.  The probability of reading all zeros gives

    P_c = (1 + cos(k theta)) / 2      (prepare with beta = 0)
    P_s = (1 + sin(k theta)) / 2      (prepare with beta = pi/2)

with ``theta = tau * (E_b - E_a) mod 2 pi``.  Each generation pins
``k theta`` modulo ``2 pi``; the previous estimate picks the branch.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .circuits import inverse, prep_circuit, simulate
from .config import TOL
from .hamiltonians import PauliHamiltonian, spectrum, to_dense
from .numerics import Spectrum, eig_hermitian, unitary_exp

TWO_PI = 2.0 * math.pi


class DisconnectedPairGraph(ValueError):
    pass


class InconsistentDifferences(ValueError):
    pass


def wrap_angle(x):
    """Map angles to ``[0, 2 pi)``."""
    return np.mod(x, TWO_PI)


def circular_distance(x, y):
    d = np.mod(np.asarray(x) - np.asarray(y), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def ideal_probabilities(theta: float, k: int) -> tuple[float, float]:
    if k < 1:
        raise ValueError("repetition count must be >= 1")
    return 0.5 * (1.0 + math.cos(k * theta)), 0.5 * (1.0 + math.sin(k * theta))


def phase_from_probabilities(p_c: float, p_s: float) -> tuple[float, bool]:
    """Angle in ``[0, 2 pi)`` with cosine part ``2 p_c - 1`` and sine part ``2 p_s - 1``.

    Returns ``(angle, degenerate)``; when both parts vanish the angle is
    unidentifiable, reported as ``(0.0, True)``.
    """
    x, y = 2.0 * p_c - 1.0, 2.0 * p_s - 1.0
    if abs(x) < TOL.degenerate_components and abs(y) < TOL.degenerate_components:
        return 0.0, True
    lam = math.atan2(y, x) % TWO_PI
    # atan2 of a tiny negative y gives 2pi - eps, which mod rounds to 2pi
    return (0.0 if lam >= TWO_PI else lam), False


def select_branch(lam: float, k: int, theta_prev: float | None = None) -> float:
    """Pick ``(lam + 2 pi m) / k`` closest to ``theta_prev`` on the circle."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if theta_prev is None:
        return float(wrap_angle(lam / k))
    candidates = wrap_angle((lam + TWO_PI * np.arange(k)) / k)
    dist = circular_distance(candidates, theta_prev)
    best = dist.min()
    # ties (within round-off) go to the smaller candidate
    tied = candidates[dist <= best + 1e-15 * max(1.0, k)]
    return float(tied.min())


@dataclass
class GenerationRecord:
    g: int
    k: int
    p_c: float
    p_s: float
    lam: float
    theta: float
    degenerate: bool = False


@dataclass
class RpeConfig:
    pair: tuple[int, int] = (0, 1)
    generations: int = 8
    shots: int | None = None  # None means exact probabilities
    seed: int | None = None
    tau: float = 1.0

    def __post_init__(self):
        self.pair = tuple(int(i) for i in self.pair)
        if len(self.pair) != 2:
            raise ValueError("pair must hold two eigenstate indices")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be finite and positive")

    @property
    def exact(self) -> bool:
        return self.shots is None


@dataclass
class RpeResult:
    records: list[GenerationRecord]
    pair: tuple[int, int]
    config: RpeConfig | None = None
    extra: dict = field(default_factory=dict)

    @property
    def theta_final(self) -> float:
        return self.records[-1].theta

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def energy_difference(self, tau: float | None = None, window: str = "ordered") -> float:
        """``theta_final / tau`` mapped to a signed energy difference ``E_b - E_a``.

        ``"ordered"`` assumes ascending eigenvalues, so ``a < b`` gives a
        nonnegative difference and ``a > b`` a nonpositive one (see
        ``ordered_representative``).
        """
        tau = tau if tau is not None else self.config.tau
        if window == "ordered":
            return float(ordered_representative(self.theta_final, *self.pair)) / tau
        return float(representative(self.theta_final, window)) / tau

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config) if self.config is not None else None,
            "pair": list(self.pair),
            "generations": [asdict(r) for r in self.records],
            "theta_final": self.theta_final,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def generations_csv(self, truth: float | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["g", "k", "p_c", "p_s", "lambda", "theta"]
        if truth is not None:
            header.append("error")
        w.writerow(header)
        for r in self.records:
            row = [r.g, r.k, *(f"{v:.17g}" for v in (r.p_c, r.p_s, r.lam, r.theta))]
            if truth is not None:
                row.append(f"{circular_distance(r.theta, truth):.17g}")
            w.writerow(row)
        return buf.getvalue()


ProbabilityOracle = Callable[[int], tuple[float, float]]


def estimate_phase(
    probabilities: ProbabilityOracle,
    generations: int,
    additive_errors: Sequence[tuple[float, float]] | Callable | None = None,
) -> list[GenerationRecord]:
    """Run the generational loop against any source of ``(P_c, P_s)``.

    ``probabilities(k)`` returns the (possibly noisy) pair for ``k``
    repetitions.  ``additive_errors`` injects ``(Delta_c, Delta_s)`` per
    generation on the ``2P - 1`` scale, either as a sequence or as a callable
    ``f(g, k, p_c, p_s) -> (Delta_c, Delta_s)``.
    """
    records: list[GenerationRecord] = []
    theta = None
    for g in range(generations):
        k = 2**g
        p_c, p_s = probabilities(k)
        if additive_errors is not None:
            d_c, d_s = additive_errors(g, k, p_c, p_s) if callable(additive_errors) else additive_errors[g]
            p_c, p_s = p_c + 0.5 * d_c, p_s + 0.5 * d_s
        lam, degenerate = phase_from_probabilities(p_c, p_s)
        theta = select_branch(lam, k, theta)
        records.append(GenerationRecord(g, k, float(p_c), float(p_s), lam, theta, degenerate))
    return records


class RpeExperiment:
    """Circuits and exact outcome probabilities for one Hamiltonian and pair.

    The evolution ``W^k`` is built by classical exponentiation of the dense
    Hamiltonian, as is the basis change ``A(H)``.
    """

    def __init__(self, h: PauliHamiltonian | np.ndarray, pair: tuple[int, int], tau: float):
        self.matrix = to_dense(h) if isinstance(h, PauliHamiltonian) else np.asarray(h, dtype=complex)
        self.spectrum: Spectrum = spectrum(h) if isinstance(h, PauliHamiltonian) else eig_hermitian(self.matrix)
        a, b = pair
        dim = self.spectrum.dim
        if not (0 <= a < dim and 0 <= b < dim):
            raise IndexError(f"pair {pair} out of range for dimension {dim}")
        self.pair = (a, b)
        self.tau = tau
        self.prep_cos = prep_circuit(self.spectrum, a, b, 0.0)
        self.prep_sin = prep_circuit(self.spectrum, a, b, math.pi / 2)
        self.unprep = inverse(self.prep_cos)
        self._prepared = {
            "c": simulate(self.prep_cos),
            "s": simulate(self.prep_sin),
        }

    @property
    def true_theta(self) -> float:
        a, b = self.pair
        e = self.spectrum.eigenvalues
        return float(wrap_angle(self.tau * (e[b] - e[a])))

    def evolution(self, k: int) -> np.ndarray:
        return unitary_exp(self.matrix, k * self.tau, self.spectrum)

    def probabilities(self, k: int) -> tuple[float, float]:
        w = self.evolution(k)
        out = []
        for key in ("c", "s"):
            final = simulate(self.unprep, w @ self._prepared[key])
            out.append(float(min(1.0, abs(final[0]) ** 2)))
        return out[0], out[1]


def auto_tau(eigenvalues, fraction: float = 0.9) -> float:
    """Time step putting the full spectral spread at ``fraction * 2 pi``."""
    spread = float(np.max(eigenvalues) - np.min(eigenvalues))
    return fraction * TWO_PI / spread if spread > 0 else 1.0


def run_rpe(
    h: PauliHamiltonian | np.ndarray,
    config: RpeConfig,
    additive_errors=None,
    rng: np.random.Generator | None = None,
) -> RpeResult:
    """Simulate the full protocol for ``config.pair`` and return the generation trail."""
    exp = RpeExperiment(h, config.pair, config.tau)
    if config.exact:
        oracle = exp.probabilities
    else:
        rng = rng if rng is not None else np.random.default_rng(config.seed)

        def oracle(k):
            p_c, p_s = exp.probabilities(k)
            return rng.binomial(config.shots, p_c) / config.shots, rng.binomial(config.shots, p_s) / config.shots

    records = estimate_phase(oracle, config.generations, additive_errors)
    return RpeResult(records, config.pair, config, {"true_theta": exp.true_theta})


def representative(theta, window: str = "symmetric"):
    """Representative of an angle.

    ``symmetric`` -> (-pi, pi], ``nonnegative`` -> [0, 2pi), ``nonpositive`` -> (-2pi, 0].
    """
    t = wrap_angle(theta)
    if window == "nonnegative":
        return t
    if window == "nonpositive":
        return np.where(t > 0, t - TWO_PI, t)
    if window == "symmetric":
        return np.where(t > math.pi, t - TWO_PI, t)
    raise ValueError(f"unknown window {window!r}")


# slack below zero so round-off around a vanishing difference does not wrap to 2 pi
ORDERED_SLACK = 0.1 * math.pi


def ordered_representative(theta, a: int, b: int):
    """Signed ``tau (E_b - E_a)`` assuming ascending eigenvalues and ``|tau dE| < 2 pi - slack``.

    ``a < b`` maps into ``[-slack, 2 pi - slack)``; ``a > b`` into ``(slack - 2 pi, slack]``.
    """
    if a <= b:
        return -ORDERED_SLACK + np.mod(np.asarray(theta) + ORDERED_SLACK, TWO_PI)
    return ORDERED_SLACK - np.mod(ORDERED_SLACK - np.asarray(theta), TWO_PI)


def reconstruct_energies(
    diffs: Sequence[tuple[tuple[int, int], float]],
    trace: float,
    tau: float,
    n: int,
    window: str | None = "symmetric",
) -> np.ndarray:
    """Absolute energies from pairwise phase differences plus the trace.

    ``diffs`` holds ``((a, b), theta_ab)`` with ``theta_ab ~ tau (E_b - E_a)``.
    With ``window=None`` the angles are used as already-unwrapped differences;
    ``window="ordered"`` takes the sign of each difference from the index order.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    pairs = [tuple(p) for p, _ in diffs]
    adj = np.zeros((n, n))
    for a, b in pairs:
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ValueError(f"invalid pair {(a, b)} for {n} levels")
        adj[a, b] = adj[b, a] = 1
    if n > 1 and connected_components(adj, directed=False)[0] != 1:
        raise DisconnectedPairGraph("pair graph does not connect all levels")
    rows = np.zeros((len(pairs) + 1, n))
    rhs = np.zeros(len(pairs) + 1)
    for i, ((a, b), theta) in enumerate(diffs):
        if window is None:
            d = theta
        elif window == "ordered":
            d = float(ordered_representative(theta, a, b))
        else:
            d = float(representative(theta, window))
        rows[i, b], rows[i, a] = 1.0, -1.0
        rhs[i] = d / tau
    rows[-1, :] = 1.0
    rhs[-1] = trace
    energies, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    resid = float(np.max(np.abs(rows @ energies - rhs)))
    if resid > TOL.inconsistent_differences * max(1.0, float(np.max(np.abs(rhs)))):
        raise InconsistentDifferences(f"residual {resid:.3e}")
    return energies
