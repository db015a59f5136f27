import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpe_lab.robustness import (
    THIRD_PI,
    TrigPoly,
    _dense_corners,
    _flatten,
    _vertex_arrays,
    bound_terms,
    brute_force_delta_lambda,
    delta_c_envelope,
    delta_s_envelope,
    f_max,
    level_contour,
    real_roots_batched,
    stationary_lambdas,
    success_region,
    worst_case_analysis,
    worst_case_batch,
    worst_case_delta_lambda,
    worker_count,
)
from rpe_lab.spam import (
    AmplitudeBudgetExceeded,
    LeakageOverlap,
    SpamParams,
    exact_delta_c,
    exact_delta_s,
    subspace_overlap,
)


def random_tuple(rng, hi=0.6):
    while True:
        ec, el, ecp, elp = rng.uniform(0, hi, 4)
        if ec**2 + el**2 <= 1 and ecp**2 + elp**2 <= 1:
            return ec, el, ecp, elp


class TestTerms:
    def test_f_max_examples(self):
        assert f_max(0, 0, 0, 0) == pytest.approx(2.0)
        assert f_max(0, 1, 0, 1) == pytest.approx(0.0)
        assert f_max(1, 0, 1, 0) == pytest.approx(2.0)

    def test_f_max_bounds_overlap(self, rng):
        for _ in range(200):
            ec, el, ecp, elp = random_tuple(rng)
            p = SpamParams(ec, rng.uniform(0, 7), el, ecp, rng.uniform(0, 7), elp)
            x = subspace_overlap(rng.uniform(0, 7), p)
            assert 2 * abs(x) <= f_max(ec, el, ecp, elp) + 1e-12

    def test_budget(self):
        with pytest.raises(AmplitudeBudgetExceeded):
            f_max(0.9, 0.9, 0, 0)

    def test_bound_terms_count_and_zero(self):
        terms = bound_terms(0, 0, 0, 0)
        assert len(terms) == 8
        for t in terms:
            assert (t.L0, t.Lx, t.Ly, t.L_plus, t.L_minus) == (0, 0, 0, 0, 0)


class TestEnvelope:
    def test_zero_errors(self):
        lam = np.linspace(0, 2 * np.pi, 17)
        for construction in ("literal", "sound"):
            lo, hi = delta_c_envelope(lam, 0, 0, 0, 0, construction)
            np.testing.assert_allclose(lo, 0, atol=1e-15)
            np.testing.assert_allclose(hi, 0, atol=1e-15)

    def test_leak_only(self, rng):
        e = 0.3
        lam = 0.4
        lo, hi = delta_c_envelope(lam, 0, e, 0, e, "sound")
        samples = [
            exact_delta_c(lam, SpamParams(0, rng.uniform(0, 7), e, 0, rng.uniform(0, 7), e), LeakageOverlap(u, rng.uniform(0, 7)))
            for u in (0.0, 0.5, 1.0)
            for _ in range(300)
        ]
        assert lo - 1e-12 <= min(samples) and max(samples) <= hi + 1e-12
        assert max(samples) > hi - 0.02
        # the literal lower side adds the Lx projection instead of subtracting it
        assert min(samples) < delta_c_envelope(lam, 0, e, 0, e, "literal")[0]

    def test_sine_is_shifted_cosine(self):
        lam = np.linspace(0, 2 * np.pi, 11)
        a = delta_s_envelope(lam, 0.1, 0.2, 0.3, 0.1)
        b = delta_c_envelope(lam - np.pi / 2, 0.1, 0.2, 0.3, 0.1)
        np.testing.assert_allclose(a, b)

    def test_sound_envelope_contains_exact(self, rng):
        for _ in range(2000):
            ec, el, ecp, elp = random_tuple(rng)
            p = SpamParams(ec, rng.uniform(0, 7), el, ecp, rng.uniform(0, 7), elp)
            ov = LeakageOverlap(rng.uniform(), rng.uniform(0, 7))
            lam = rng.uniform(0, 2 * np.pi)
            for exact, env in ((exact_delta_c, delta_c_envelope), (exact_delta_s, delta_s_envelope)):
                lo, hi = env(lam, ec, el, ecp, elp, "sound")
                assert lo - 1e-12 <= exact(lam, p, ov) <= hi + 1e-12

    def test_literal_envelope_counterexample(self):
        # found by random search; the literal construction drops the sign of the Lx, Ly projection on the lower side
        p = SpamParams(0.1661347224272225, 0.7280051138837079, 0.09639120526507612, 0.5819552479296796, 3.9175016711702146, 0.3096411513287272)
        ov = LeakageOverlap(0.776683114342298, 3.8516133344290484)
        lam = 5.763551461051757
        lo, hi = delta_c_envelope(lam, p.eps_c, p.eps_l, p.eps_c_prime, p.eps_l_prime, "literal")
        assert exact_delta_c(lam, p, ov) < lo - 1.0
        slo, shi = delta_c_envelope(lam, p.eps_c, p.eps_l, p.eps_c_prime, p.eps_l_prime, "sound")
        assert slo <= exact_delta_c(lam, p, ov) <= shi


class TestTrigPoly:
    def test_algebra_matches_direct(self, rng):
        n = 5
        a = TrigPoly.from_coeffs(n, rng.normal(size=(3, n)), rng.normal(size=(2, n)))
        b = TrigPoly.from_coeffs(n, rng.normal(size=(2, n)), rng.normal(size=(3, n)))
        lam = rng.uniform(0, 2 * np.pi, (n, 7))
        np.testing.assert_allclose((a * b)(lam), a(lam) * b(lam), atol=1e-12)
        np.testing.assert_allclose((a - b)(lam), a(lam) - b(lam), atol=1e-12)
        np.testing.assert_allclose((a + b)(lam), a(lam) + b(lam), atol=1e-12)
        h = 1e-6
        fd = (a(lam + h) - a(lam - h)) / (2 * h)
        np.testing.assert_allclose(a.derivative()(lam), fd, atol=1e-7)

    def test_squared_form_vanishes_at_zeros(self, rng):
        n = 4
        a = TrigPoly.from_coeffs(n, rng.normal(size=(3, n)), rng.normal(size=(2, n)))
        lam = stationary_lambdas(a)
        ok = np.isfinite(lam)
        assert ok.any()
        np.testing.assert_allclose(a(np.where(ok, lam, 0.0))[ok], 0, atol=1e-8)

    def test_real_roots(self):
        # (c - 0.5)(c + 0.25)(c - 3) in ascending order
        q = np.polynomial.polynomial.polyfromroots([0.5, -0.25, 3.0])[None, :]
        roots = real_roots_batched(q)
        np.testing.assert_allclose(np.sort(roots[np.isfinite(roots)]), [-0.25, 0.5], atol=1e-12)


class TestWorstCase:
    def test_zero(self):
        assert worst_case_delta_lambda(0, 0, 0, 0) == 0.0
        assert brute_force_delta_lambda(0, 0, 0, 0, resolution=16) < 1e-15

    def test_root_path_against_fine_grid(self, rng):
        # mixed-sign corners only exist in the literal construction
        tuples = np.array([random_tuple(rng, 0.35) for _ in range(40)])
        v = _vertex_arrays(*tuples.T, "literal")
        mixed = v["sx"] != v["sy"]
        values, _, _, _ = worst_case_batch(*tuples.T, "literal")
        fine, _ = _dense_corners(_flatten(v, np.ones_like(mixed)), 2**16)
        fine = fine.reshape(mixed.shape).max(axis=1)
        assert np.all(values >= fine - 1e-12)
        assert np.max(values - fine) < 1e-6

    def test_debug_certifies(self, rng):
        tuples = np.array([random_tuple(rng, 0.4) for _ in range(100)])
        for construction in ("literal", "sound"):
            values, _, fallback, dense = worst_case_batch(*tuples.T, construction, debug=True)
            assert not fallback.any()
            assert np.all(dense <= values + 1e-9)

    def test_margin_sign_tracks_threshold(self, rng):
        for _ in range(200):
            t = random_tuple(rng, 0.4)
            wc = worst_case_analysis(*t, construction="sound")
            if abs(wc.value - THIRD_PI) > 1e-6:
                assert (wc.margin >= 0) == (wc.value >= THIRD_PI)

    def test_same_sign_margin_argmax(self, rng):
        # on a circle-shaped corner the margin |D2| - sqrt(3) D1 peaks where |lam - phi0| = 5 pi / 6
        t = random_tuple(rng, 0.3)
        v = _vertex_arrays(*[np.array([x]) for x in t], "sound")
        lams = np.linspace(0, 2 * np.pi, 200001)
        for j in range(v["Lx"].shape[1]):
            lx, ly = v["Lx"][0, j], v["Ly"][0, j]
            ex, ey = v["ellx"][0, j], v["elly"][0, j]
            if math.hypot(ex, ey) < 1e-3:
                continue
            c, s = np.cos(lams), np.sin(lams)
            dx, dy = ex + lx * c + ly * s, ey + lx * s - ly * c
            d1, d2 = 1 + dx * c + dy * s, dx * s - dy * c
            # drop the lam-independent pieces so only the ell part drives the argmax
            m = np.abs(ex * s - ey * c) - math.sqrt(3) * (ex * c + ey * s)
            arg = lams[np.argmax(m)]
            phi0 = math.atan2(ey, ex)
            dist = abs((arg - phi0 + np.pi) % (2 * np.pi) - np.pi)
            assert dist == pytest.approx(5 * np.pi / 6, abs=1e-3)
            assert np.all(np.isfinite(d1 + d2))

    def test_sound_dominates_brute_force(self, rng):
        for _ in range(10):
            t = random_tuple(rng, 0.4)
            assert brute_force_delta_lambda(*t, resolution=16) <= worst_case_delta_lambda(*t, "sound") + 1e-12

    def test_literal_dominance_counterexample(self):
        e = 0.2
        assert brute_force_delta_lambda(e, 0, e, 0, resolution=32) > worst_case_delta_lambda(e, 0, e, 0, "literal")

    def test_brute_force_grows_with_resolution(self):
        # the 16-point grids are subsets of the 32-point grids
        t = (0.15, 0.1, 0.2, 0.05)
        assert brute_force_delta_lambda(*t, resolution=16) <= brute_force_delta_lambda(*t, resolution=32)

    def test_brute_force_resolution_floor(self):
        with pytest.raises(ValueError):
            brute_force_delta_lambda(0.1, 0.1, 0.1, 0.1, resolution=8)

    def test_construction_checked(self):
        with pytest.raises(ValueError):
            worst_case_delta_lambda(0, 0, 0, 0, "loose")

    @given(st.floats(0, 0.45), st.floats(0, 0.45), st.floats(0, 0.05), st.floats(0, 0.05))
    def test_monotone_in_tied_amplitudes(self, ec, el, dec, del_):
        lo = worst_case_delta_lambda(ec, el, ec, el, "sound")
        hi = worst_case_delta_lambda(ec + dec, el + del_, ec + dec, el + del_, "sound")
        assert hi >= lo - 1e-9


class TestSuccessRegion:
    def test_all_zero_grid(self):
        grid = success_region(n=3, max_eps=0.0, workers=1)
        assert np.all(grid.values == 0)
        assert grid.contour == []

    def test_small_grid(self):
        grid = success_region(n=11, max_eps=0.5, workers=1)
        assert grid.values[0, 0] == 0.0
        assert grid.monotonicity_violations() == 0
        assert not grid.fallback.any()
        assert grid.to_csv().splitlines()[0] == "eps_c,eps_l,delta_lambda_max"
        assert len(grid.to_csv().splitlines()) == 1 + 121
        assert grid.contour_csv().splitlines()[0] == "segment,eps_c,eps_l"
        assert grid.axis_crossing("eps_l") is not None
        with pytest.raises(ValueError):
            grid.axis_crossing("eps_x")

    def test_parallel_matches_serial(self):
        a = success_region(n=9, max_eps=0.4, workers=1, block=16)
        b = success_region(n=9, max_eps=0.4, workers=2, block=16)
        np.testing.assert_array_equal(a.values, b.values)

    def test_contour_on_level(self):
        axis = np.linspace(0, 1, 5)
        values = np.add.outer(axis, axis)
        segs = level_contour(axis, axis, values, level=1.0)
        pts = np.concatenate(segs)
        np.testing.assert_allclose(pts.sum(axis=1), 1.0, atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            success_region(n=1)
        with pytest.raises(ValueError):
            success_region(n=3, max_eps=0.9)

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("RPE_LAB_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("RPE_LAB_THREADS", "x")
        with pytest.raises(ValueError):
            worker_count()
