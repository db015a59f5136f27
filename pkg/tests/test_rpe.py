import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpe_lab.config import ADDITIVE_ERROR_BOUND
from rpe_lab.hamiltonians import parse_hamiltonian, random_hamiltonian, spectrum
from rpe_lab.rpe import (
    TWO_PI,
    DisconnectedPairGraph,
    InconsistentDifferences,
    RpeConfig,
    RpeExperiment,
    auto_tau,
    circular_distance,
    estimate_phase,
    ideal_probabilities,
    ordered_representative,
    phase_from_probabilities,
    reconstruct_energies,
    run_rpe,
    select_branch,
)


class TestProbabilities:
    def test_examples(self):
        assert ideal_probabilities(0.0, 1) == (1.0, 0.5)
        np.testing.assert_allclose(ideal_probabilities(math.pi / 2, 1), (0.5, 1.0))
        np.testing.assert_allclose(ideal_probabilities(math.pi / 3, 2), (0.25, 0.9330127018922193))

    def test_rejects_k0(self):
        with pytest.raises(ValueError):
            ideal_probabilities(0.1, 0)

    def test_matches_circuit_pipeline(self):
        # theta = pi/3 for H = Z with tau = pi/6, cross-checked through the simulator
        exp = RpeExperiment(parse_hamiltonian("Z 1.0"), (0, 1), math.pi / 6)
        np.testing.assert_allclose(exp.probabilities(2), ideal_probabilities(math.pi / 3, 2), atol=1e-12)


class TestPhase:
    def test_examples(self):
        assert phase_from_probabilities(1.0, 0.5) == (0.0, False)
        assert phase_from_probabilities(0.5, 1.0)[0] == pytest.approx(math.pi / 2)
        assert phase_from_probabilities(0.25, 0.9330127018922193)[0] == pytest.approx(2 * math.pi / 3)

    def test_degenerate(self):
        assert phase_from_probabilities(0.5, 0.5) == (0.0, True)

    def test_round_trip(self, rng):
        for _ in range(1000):
            theta = rng.uniform(0, TWO_PI)
            k = int(rng.integers(1, 1025))
            lam, _ = phase_from_probabilities(*ideal_probabilities(theta, k))
            assert circular_distance(lam, (k * theta) % TWO_PI) < 1e-12 * max(1, k)
            assert 0 <= lam < TWO_PI


class TestBranch:
    def test_examples(self):
        assert select_branch(0.0, 2, math.pi) == pytest.approx(math.pi)
        assert select_branch(math.pi / 2, 1) == pytest.approx(math.pi / 2)
        assert select_branch(math.pi, 4, 0.8) == pytest.approx(math.pi / 4)

    def test_tie_goes_to_smaller(self):
        # candidates 0 and pi are equidistant from pi/2
        assert select_branch(0.0, 2, math.pi / 2) == 0.0

    @given(st.floats(0, TWO_PI, exclude_max=True), st.integers(0, 10), st.floats(-0.99, 0.99))
    def test_brute_force_over_m(self, theta_prev, g, frac):
        k = 2**g
        lam = (k * theta_prev + frac * math.pi / 2) % TWO_PI
        got = select_branch(lam, k, theta_prev)
        cands = [((lam + TWO_PI * m) / k) % TWO_PI for m in range(k)]
        best = min(circular_distance(c, theta_prev) for c in cands)
        assert circular_distance(got, theta_prev) <= best + 1e-12


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs", [dict(generations=0), dict(shots=0), dict(tau=0.0), dict(tau=math.inf), dict(pair=(0,))]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RpeConfig(**kwargs)


class TestRunRpe:
    def test_pauli_z(self):
        res = run_rpe(parse_hamiltonian("Z 1.0"), RpeConfig((0, 1), 6, tau=1.0))
        assert abs(res.theta_final - 2.0) < 1e-10
        assert res.energy_difference() == pytest.approx(2.0, abs=1e-10)
        assert [r.k for r in res.records] == [1, 2, 4, 8, 16, 32]

    def test_reverse_pair_gives_negative_difference(self):
        res = run_rpe(parse_hamiltonian("Z 1.0"), RpeConfig((1, 0), 6, tau=1.0))
        assert res.energy_difference() == pytest.approx(-2.0, abs=1e-10)

    def test_degenerate_pair(self):
        h = parse_hamiltonian("ZI 1.0")  # levels {-1,-1,1,1}
        res = run_rpe(h, RpeConfig((0, 1), 4, tau=1.0))
        assert res.theta_final == 0.0
        assert not res.records[0].degenerate
        assert res.energy_difference() == pytest.approx(0.0, abs=1e-12)

    def test_random_hamiltonians_exact(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 4))
            h = random_hamiltonian(n, rng)
            e = spectrum(h).eigenvalues
            a, b = rng.choice(2**n, 2, replace=False)
            res = run_rpe(h, RpeConfig((a, b), 10, tau=auto_tau(e)))
            assert abs(res.energy_difference() - (e[b] - e[a])) < 1e-9

    def test_sampled_seeded_reproducible(self):
        h = parse_hamiltonian("Z 1.0")
        r1 = run_rpe(h, RpeConfig((0, 1), 6, shots=1024, seed=11, tau=1.0))
        r2 = run_rpe(h, RpeConfig((0, 1), 6, shots=1024, seed=11, tau=1.0))
        assert r1.to_json() == r2.to_json()
        assert abs(r1.energy_difference() - 2.0) < 0.05

    def test_serialization(self):
        res = run_rpe(parse_hamiltonian("Z 1.0"), RpeConfig((0, 1), 3, tau=1.0))
        d = res.to_dict()
        assert d["theta_final"] == res.records[-1].theta
        assert len(d["generations"]) == 3
        csv_text = res.generations_csv(truth=2.0)
        assert csv_text.splitlines()[0] == "g,k,p_c,p_s,lambda,theta,error"


class TestAdditiveRobustness:
    @given(st.floats(0, TWO_PI, exclude_max=True), st.integers(0, 2**31 - 1))
    def test_errors_below_bound_keep_branches(self, theta, seed):
        rng = np.random.default_rng(seed)
        G = 10
        bound = 2 * ADDITIVE_ERROR_BOUND * 0.999
        errs = rng.uniform(-bound, bound, size=(G, 2))
        recs = estimate_phase(lambda k: ideal_probabilities(theta, k), G, errs)
        for r in recs:
            assert circular_distance(r.theta, theta) <= (math.pi / 3) / r.k + 1e-12

    def test_large_errors_can_break(self):
        # a push straight across the circle flips the first reading
        recs = estimate_phase(lambda k: ideal_probabilities(0.0, k), 3, [(-2.0, 0.0)] * 3)
        assert circular_distance(recs[-1].theta, 0.0) > (math.pi / 3) / 4


class TestReconstruct:
    def test_two_levels(self):
        np.testing.assert_allclose(reconstruct_energies([((0, 1), 2.0)], 0.0, 1.0, 2, window=None), [-1, 1])

    def test_chain(self):
        e = reconstruct_energies([((0, 1), 1.0), ((1, 2), 1.0), ((2, 3), 1.0)], 6.0, 1.0, 4)
        np.testing.assert_allclose(e, [0, 1, 2, 3], atol=1e-12)

    def test_star(self):
        e = reconstruct_energies([((0, 1), 1.0), ((0, 2), 2.0), ((0, 3), 3.0)], 6.0, 1.0, 4, window="ordered")
        np.testing.assert_allclose(e, [0, 1, 2, 3], atol=1e-12)

    def test_symmetric_window_wraps(self):
        # theta = 2 pi - 0.5 is a difference of -0.5 in (-pi, pi]
        e = reconstruct_energies([((0, 1), TWO_PI - 0.5)], 0.0, 1.0, 2)
        np.testing.assert_allclose(e, [0.25, -0.25])

    def test_disconnected(self):
        with pytest.raises(DisconnectedPairGraph):
            reconstruct_energies([((0, 1), 1.0), ((2, 3), 1.0), ((0, 1), 1.0)], 0.0, 1.0, 4)

    def test_inconsistent(self):
        with pytest.raises(InconsistentDifferences):
            reconstruct_energies([((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 1.0)], 0.0, 1.0, 3)

    def test_ordered_representative_near_zero(self):
        assert ordered_representative(TWO_PI - 1e-15, 0, 1) == pytest.approx(0.0, abs=1e-14)
        assert ordered_representative(1e-15, 1, 0) == pytest.approx(0.0, abs=1e-14)
        assert ordered_representative(1.0, 1, 0) == pytest.approx(1.0 - TWO_PI)
