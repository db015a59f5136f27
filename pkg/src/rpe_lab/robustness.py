"""Worst-case SPAM tolerance of the phase estimator.

For a generation whose ideal reading is ``n = (cos lam, sin lam)``, SPAM errors
shift the measured point to ``n + Delta``.  Writing that point as
``Delta1 * n + Delta2 * n_perp`` with ``n_perp = (sin lam, -cos lam)``, the
angular error is ``atan2(Delta2, Delta1)`` and a generation stays on the right
branch while ``|Delta2| < sqrt(3) * Delta1``.

``Delta_c`` and ``Delta_s`` are bounded by a box whose corners depend on
``lam`` and on the error amplitudes.  Two box constructions are provided:

``"literal"``
    Corners ``(L+ + n.L, L+ + n_perp.L)``, ``(L- - n.L, L- - n_perp.L)`` and
    the two mixed ones, with ``Ly = |A||B|``.  Term-wise phase extremization
    over ``A = C'C +- e_c' e_c``, ``B = C e_c' +- C' e_c``.  This is the
    reference construction and the default.
``"sound"``
    The convex hull of every attainable ``(Delta_c, Delta_s)``: all corners
    shifted by ``+ n.L`` and ``Ly = 2|A||B|``.  It reaches pi/3 at smaller
    amplitudes, but provably contains the exact errors.

Mixed-sign corners of the ``"literal"`` box trace non-circular curves in
``lam``; their extremes come from real roots of ``p1(c)**2 - p2(c)**2 (1 - c**2)``
with ``c = cos lam``.  Every other corner traces a circle and has a closed
form.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import TOL
from .spam import AmplitudeBudgetExceeded, LeakageOverlap, SpamParams, exact_erroneous_probability, subspace_overlap

CONSTRUCTIONS = ("literal", "sound")
SQRT3 = math.sqrt(3.0)
HALF_PI = 0.5 * math.pi
THIRD_PI = math.pi / 3.0
# fixed lambda samples always added to the root-derived candidates
_FIXED_LAMBDAS = np.arange(8) * (math.pi / 4)


class RootFindingFailure(RuntimeError):
    pass


def _check_construction(construction: str):
    if construction not in CONSTRUCTIONS:
        raise ValueError(f"construction must be one of {CONSTRUCTIONS}, got {construction!r}")


def _budgets(eps_c, eps_l):
    eps_c = np.asarray(eps_c, dtype=float)
    eps_l = np.asarray(eps_l, dtype=float)
    if np.any(eps_c < 0) or np.any(eps_l < 0):
        raise AmplitudeBudgetExceeded("error amplitudes must be non-negative")
    c2 = 1.0 - eps_c**2 - eps_l**2
    if np.any(c2 < -1e-15):
        raise AmplitudeBudgetExceeded("eps_c^2 + eps_l^2 exceeds 1")
    return np.sqrt(np.maximum(c2, 0.0))


# ----------------------------------------------------------------------------
# bound terms


@dataclass(frozen=True)
class BoundTerms:
    """One phase-extremal choice of the envelope terms."""

    A_mag: float
    B_mag: float
    C: float
    C_prime: float
    L0: float
    Lx: float
    Ly: float
    F_max: float
    L_plus: float
    L_minus: float


def f_max(eps_c, eps_l, eps_c_prime, eps_l_prime):
    """Largest possible magnitude of the in-subspace overlap term (times two)."""
    c, cp = _budgets(eps_c, eps_l), _budgets(eps_c_prime, eps_l_prime)
    a = cp * c + np.asarray(eps_c_prime) * eps_c
    b = c * np.asarray(eps_c_prime) + cp * np.asarray(eps_c)
    out = 2.0 * np.sqrt(a**2 + b**2)
    return float(out) if out.ndim == 0 else out


def _term_ranges(ec, el, ecp, elp, construction):
    """Vectorized extremal terms; each output has the broadcast input shape."""
    ec, el, ecp, elp = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (ec, el, ecp, elp)))
    c, cp = _budgets(ec, el), _budgets(ecp, elp)
    a_plus = cp * c + ecp * ec
    a_minus = np.abs(cp * c - ecp * ec)
    b_plus = c * ecp + cp * ec
    b_minus = np.abs(c * ecp - cp * ec)
    a2 = np.stack([a_plus**2, a_plus**2, a_minus**2, a_minus**2])
    b2 = np.stack([b_plus**2, b_minus**2, b_plus**2, b_minus**2])
    l0 = a2 - 1.0 + b2
    lx = a2 - 1.0 - b2
    ly = (2.0 if construction == "sound" else 1.0) * a_plus * b_plus
    d = el * elp
    fm = 2.0 * np.sqrt(a_plus**2 + b_plus**2)
    leak_up = 2.0 * d * (fm + d)
    leak_down = np.minimum(0.5 * fm**2, leak_up)
    return {
        "C": c,
        "C_prime": cp,
        "A_mag": a_plus,
        "B_mag": b_plus,
        "L0": (l0.min(axis=0), l0.max(axis=0)),
        "Lx": (lx.min(axis=0), lx.max(axis=0)),
        "Ly": ly,
        "F_max": fm,
        "leak_up": leak_up,
        "leak_down": leak_down,
    }


def bound_terms(eps_c, eps_l, eps_c_prime, eps_l_prime, construction: str = "literal") -> list[BoundTerms]:
    """All eight extremal ``(L0, Lx, Ly)`` combinations for one amplitude tuple."""
    _check_construction(construction)
    t = _term_ranges(eps_c, eps_l, eps_c_prime, eps_l_prime, construction)
    out = []
    for l0 in t["L0"]:
        for lx in t["Lx"]:
            for sign in (-1.0, 1.0):
                l0f = float(l0)
                out.append(
                    BoundTerms(
                        A_mag=float(t["A_mag"]),
                        B_mag=float(t["B_mag"]),
                        C=float(t["C"]),
                        C_prime=float(t["C_prime"]),
                        L0=l0f,
                        Lx=float(lx),
                        Ly=sign * float(t["Ly"]),
                        F_max=float(t["F_max"]),
                        L_plus=l0f + float(t["leak_up"]),
                        L_minus=l0f - float(t["leak_down"]),
                    )
                )
    return out


def delta_c_envelope(lam, eps_c, eps_l, eps_c_prime, eps_l_prime, construction: str = "literal"):
    """Lower and upper bounds on ``Delta_c`` at phase ``lam`` over all error phases."""
    _check_construction(construction)
    lam = np.asarray(lam, dtype=float)
    t = _term_ranges(eps_c, eps_l, eps_c_prime, eps_l_prime, construction)
    c, s = np.cos(lam), np.sin(lam)
    proj = [lx * c + ly * s for lx in t["Lx"] for ly in (-t["Ly"], t["Ly"])]
    proj_max = np.max(proj, axis=0)
    proj_min = np.min(proj, axis=0)
    upper = t["L0"][1] + t["leak_up"] + proj_max
    if construction == "literal":
        lower = t["L0"][0] - t["leak_down"] - proj_max
    else:
        lower = t["L0"][0] - t["leak_down"] + proj_min
    return lower, upper


def delta_s_envelope(lam, eps_c, eps_l, eps_c_prime, eps_l_prime, construction: str = "literal"):
    """Bounds on ``Delta_s``: the cosine envelope at ``lam - pi/2``."""
    return delta_c_envelope(np.asarray(lam) - HALF_PI, eps_c, eps_l, eps_c_prime, eps_l_prime, construction)


# ----------------------------------------------------------------------------
# box vertices


@dataclass(frozen=True)
class VertexTerms:
    """A box corner at one ``lam``, expressed in the rotated ``(n, n_perp)`` frame."""

    ell0: float
    phi0: float
    Delta1: float
    Delta2: float


def _vertex_arrays(ec, el, ecp, elp, construction):
    """Box corners as ``Delta = ell + (sx (Lx c + Ly s), sy (Lx s - Ly c))``.

    Returns a dict of arrays with trailing axis of length 32 (8 term choices
    times 4 corners).
    """
    t = _term_ranges(ec, el, ecp, elp, construction)
    cols = {k: [] for k in ("ellx", "elly", "Lx", "Ly", "sx", "sy")}
    for l0 in t["L0"]:
        lp = l0 + t["leak_up"]
        lm = l0 - t["leak_down"]
        for lx in t["Lx"]:
            for ly in (-t["Ly"], t["Ly"]):
                if construction == "literal":
                    corners = ((lp, lp, 1.0, 1.0), (lm, lm, -1.0, -1.0), (lp, lm, 1.0, -1.0), (lm, lp, -1.0, 1.0))
                else:
                    corners = ((lp, lp, 1.0, 1.0), (lm, lm, 1.0, 1.0), (lp, lm, 1.0, 1.0), (lm, lp, 1.0, 1.0))
                for ex, ey, sx, sy in corners:
                    cols["ellx"].append(ex)
                    cols["elly"].append(ey)
                    cols["Lx"].append(lx)
                    cols["Ly"].append(ly)
                    cols["sx"].append(np.full_like(lx, sx))
                    cols["sy"].append(np.full_like(lx, sy))
    return {k: np.stack(v, axis=-1) for k, v in cols.items()}


def _delta12(lam, v):
    c, s = np.cos(lam), np.sin(lam)
    dx = v["ellx"] + v["sx"] * (v["Lx"] * c + v["Ly"] * s)
    dy = v["elly"] + v["sy"] * (v["Lx"] * s - v["Ly"] * c)
    return 1.0 + dx * c + dy * s, dx * s - dy * c


def vertex_terms(lam: float, eps_c, eps_l, eps_c_prime, eps_l_prime, construction: str = "literal") -> list[VertexTerms]:
    _check_construction(construction)
    v = _vertex_arrays(eps_c, eps_l, eps_c_prime, eps_l_prime, construction)
    d1, d2 = _delta12(lam, v)
    return [
        VertexTerms(float(math.hypot(ex, ey)), float(math.atan2(ey, ex)), float(a), float(b))
        for ex, ey, a, b in zip(v["ellx"], v["elly"], d1, d2)
    ]


# ----------------------------------------------------------------------------
# polynomials of the form p1(c) + p2(c) * s, with c = cos lam and s = sin lam

_DEG = 12  # storage length for coefficient arrays (ascending powers of c)


class TrigPoly:
    """Batch of ``p1(cos) + p2(cos) sin`` with coefficients in ascending order."""

    __slots__ = ("p1", "p2")

    def __init__(self, p1, p2):
        self.p1 = p1
        self.p2 = p2

    @classmethod
    def from_coeffs(cls, n, p1_terms, p2_terms):
        p1 = np.zeros((n, _DEG))
        p2 = np.zeros((n, _DEG))
        for i, t in enumerate(p1_terms):
            p1[:, i] = t
        for i, t in enumerate(p2_terms):
            p2[:, i] = t
        return cls(p1, p2)

    @staticmethod
    def _pmul(a, b):
        out = np.zeros_like(a)
        for i in range(_DEG):
            nz = np.any(a[:, i] != 0)
            if not nz:
                continue
            out[:, i:] += a[:, i : i + 1] * b[:, : _DEG - i]
        return out

    @staticmethod
    def _one_minus_c2(a):
        out = a.copy()
        out[:, 2:] -= a[:, :-2]
        return out

    @staticmethod
    def _shift(a):
        out = np.zeros_like(a)
        out[:, 1:] = a[:, :-1]
        return out

    @staticmethod
    def _dc(a):
        out = np.zeros_like(a)
        out[:, :-1] = a[:, 1:] * np.arange(1, _DEG)
        return out

    def __mul__(self, other: "TrigPoly") -> "TrigPoly":
        m = self._pmul
        p1 = m(self.p1, other.p1) + self._one_minus_c2(m(self.p2, other.p2))
        p2 = m(self.p1, other.p2) + m(self.p2, other.p1)
        return TrigPoly(p1, p2)

    def __sub__(self, other: "TrigPoly") -> "TrigPoly":
        return TrigPoly(self.p1 - other.p1, self.p2 - other.p2)

    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        return TrigPoly(self.p1 + other.p1, self.p2 + other.p2)

    def scale(self, k) -> "TrigPoly":
        k = np.asarray(k, dtype=float).reshape(-1, 1)
        return TrigPoly(self.p1 * k, self.p2 * k)

    def derivative(self) -> "TrigPoly":
        """d/dlam, using dc = -s dlam and ds = c dlam."""
        p1 = -self._one_minus_c2(self._dc(self.p2)) + self._shift(self.p2)
        p2 = -self._dc(self.p1)
        return TrigPoly(p1, p2)

    def squared_form(self) -> np.ndarray:
        """Coefficients of ``p1**2 - p2**2 (1 - c**2)``, zero wherever the poly is."""
        return self._pmul(self.p1, self.p1) - self._one_minus_c2(self._pmul(self.p2, self.p2))

    def __call__(self, lam):
        """Evaluate at ``lam`` of shape ``(n, m)``."""
        c, s = np.cos(lam), np.sin(lam)
        return _polyval(self.p1, c) + _polyval(self.p2, c) * s

    def scale_of(self) -> np.ndarray:
        return np.abs(self.p1).sum(axis=1) + np.abs(self.p2).sum(axis=1)


def _polyval(coeffs, x):
    out = np.zeros_like(x)
    for i in range(coeffs.shape[1] - 1, -1, -1):
        out = out * x + coeffs[:, i : i + 1]
    return out


def real_roots_batched(q: np.ndarray) -> np.ndarray:
    """Real roots in ``[-1, 1]`` of each row of ascending coefficients.

    Companion-matrix eigenvalues grouped by effective degree.  Roots with
    ``|imag| >= 1e-9`` or ``|re| > 1 + 1e-12`` are dropped (NaN); the rest
    are clamped to ``[-1, 1]``.
    """
    q = np.asarray(q, dtype=float)
    n, width = q.shape
    out = np.full((n, width - 1), np.nan)
    scale = np.abs(q).max(axis=1)
    live = scale > 1e-300
    significant = np.abs(q) > 1e-13 * scale[:, None]
    significant[~live] = False
    # highest significant power per row
    deg = np.where(significant.any(axis=1), width - 1 - np.argmax(significant[:, ::-1], axis=1), 0)
    for d in np.unique(deg):
        if d < 1:
            continue
        rows = np.flatnonzero(deg == d)
        monic = q[rows, :d] / q[rows, d : d + 1]
        comp = np.zeros((rows.size, d, d))
        if d > 1:
            idx = np.arange(d - 1)
            comp[:, idx + 1, idx] = 1.0
        comp[:, :, -1] = -monic
        if not np.all(np.isfinite(comp)):
            raise RootFindingFailure("non-finite companion matrix")
        try:
            ev = np.linalg.eigvals(comp)
        except np.linalg.LinAlgError as exc:
            raise RootFindingFailure(str(exc)) from exc
        ok = (np.abs(ev.imag) < TOL.root_imag) & (np.abs(ev.real) <= 1.0 + TOL.root_clamp)
        out[rows, :d] = np.where(ok, np.clip(ev.real, -1.0, 1.0), np.nan)
    return out


def stationary_lambdas(poly: TrigPoly, newton_steps: int = 2) -> np.ndarray:
    """Zeros of ``poly`` in ``lam``, from roots of its squared form.

    Each root ``c`` is tried on both sine branches, polished with a couple of
    Newton steps in ``lam`` and kept only if ``|poly| <= 1e-8 * scale``.
    """
    roots = real_roots_batched(poly.squared_form())
    s = np.sqrt(np.clip(1.0 - roots**2, 0.0, None))
    lam = np.concatenate([np.arctan2(s, roots), np.arctan2(-s, roots)], axis=1)
    deriv = poly.derivative()
    valid = np.isfinite(lam)
    lam = np.where(valid, lam, 0.0)
    for _ in range(newton_steps):
        f = poly(lam)
        fp = deriv(lam)
        step = np.where(np.abs(fp) > 1e-300, f / np.where(fp == 0, 1.0, fp), 0.0)
        step = np.clip(step, -1e-2, 1e-2)
        lam = lam - step
    resid = np.abs(poly(lam))
    valid &= resid <= TOL.root_residual * np.maximum(poly.scale_of(), 1e-300)[:, None]
    return np.where(valid, lam, np.nan)


# ----------------------------------------------------------------------------
# worst case over lam


@dataclass
class WorstCase:
    """Worst-case angular error for one amplitude tuple."""

    value: float
    margin: float
    construction: str
    fallback: bool = False
    dense_value: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def succeeds(self) -> bool:
        return self.value < THIRD_PI


def _circle_corners(v):
    """Closed form for corners whose curve in lam is a circle."""
    qx = 1.0 + v["sx"] * v["Lx"]
    qy = v["sx"] * v["Ly"]
    r = np.hypot(v["ellx"], v["elly"])
    qn = np.hypot(qx, qy)
    clamp = qx - r <= 0.0
    ratio = np.where(clamp, 0.0, r / np.where(qn > 0, qn, 1.0))
    angle = np.abs(np.arctan2(qy, qx)) + np.arcsin(np.clip(ratio, 0.0, 1.0))
    angle = np.where(clamp, HALF_PI, np.minimum(angle, HALF_PI))
    margin = 2.0 * r + np.abs(v["Ly"]) - SQRT3 * qx
    return angle, margin


def _opposite_polys(v):
    """``Delta1``, ``Delta2`` of mixed-sign corners as TrigPolys."""
    n = v["Lx"].shape[0]
    sig, lx, ly, ex, ey = v["sx"], v["Lx"], v["Ly"], v["ellx"], v["elly"]
    d1 = TrigPoly.from_coeffs(n, (1.0 - sig * lx, ex, 2.0 * sig * lx), (ey, 2.0 * sig * ly))
    d2 = TrigPoly.from_coeffs(n, (sig * ly, -ey, -2.0 * sig * ly), (ex, 2.0 * sig * lx))
    return d1, d2


def _evaluate(lams, v):
    """Max angle, min Delta1 and max margin over candidate lams (NaN ignored)."""
    valid = np.isfinite(lams)
    lams = np.where(valid, lams, 0.0)
    d1, d2 = _delta12(lams, {k: x[:, None] for k, x in v.items()})
    ang = np.where(valid, np.abs(np.arctan2(d2, d1)), -np.inf)
    d1m = np.where(valid, d1, np.inf)
    marg = np.where(valid, np.abs(d2) - SQRT3 * d1, -np.inf)
    return ang.max(axis=1), d1m.min(axis=1), marg.max(axis=1)


def _opposite_corners(v):
    d1, d2 = _opposite_polys(v)
    d1p, d2p = d1.derivative(), d2.derivative()
    stationary = d1 * d2p - d2 * d1p  # zero where the angle is stationary
    p_plus = d2p - d1p.scale(np.full(v["Lx"].shape[0], SQRT3))
    p_minus = TrigPoly(-d2p.p1, -d2p.p2) - d1p.scale(np.full(v["Lx"].shape[0], SQRT3))
    cands = [stationary_lambdas(p) for p in (stationary, p_plus, p_minus, d1p)]
    fixed = np.broadcast_to(_FIXED_LAMBDAS, (v["Lx"].shape[0], _FIXED_LAMBDAS.size))
    lams = np.concatenate([*cands, fixed], axis=1)
    ang, d1min, margin = _evaluate(lams, v)
    return np.where(d1min <= 0.0, HALF_PI, np.minimum(ang, HALF_PI)), margin


def _dense_corners(v, samples: int):
    lams = np.broadcast_to(np.arange(samples) * (2 * math.pi / samples), (v["Lx"].shape[0], samples))
    ang, d1min, margin = _evaluate(lams, v)
    return np.where(d1min <= 0.0, HALF_PI, np.minimum(ang, HALF_PI)), margin


def _flatten(v, mask):
    return {k: x[mask] for k, x in v.items()}


def worst_case_batch(eps_c, eps_l, eps_c_prime, eps_l_prime, construction: str = "literal", debug: bool = False):
    """Vectorized worst case.

    Returns ``(values, margins, fallback, dense)`` arrays of the broadcast
    input shape; ``dense`` is NaN unless ``debug``.
    """
    _check_construction(construction)
    arrays = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (eps_c, eps_l, eps_c_prime, eps_l_prime)))
    shape = arrays[0].shape
    flat = [a.reshape(-1) for a in arrays]
    v = _vertex_arrays(*flat, construction)  # (m, 32)
    m, nv = v["Lx"].shape
    angle = np.empty((m, nv))
    margin = np.empty((m, nv))
    same = v["sx"] == v["sy"]
    va = _flatten(v, same)
    angle[same], margin[same] = _circle_corners(va)
    fallback = np.zeros(m, dtype=bool)
    if np.any(~same):
        vb = _flatten(v, ~same)
        try:
            a_opp, m_opp = _opposite_corners(vb)
        except RootFindingFailure:
            a_opp, m_opp = _dense_corners(vb, TOL.dense_lambda_samples)
            fallback[np.any(~same, axis=1)] = True
        angle[~same], margin[~same] = a_opp, m_opp
    values = angle.max(axis=1)
    margins = margin.max(axis=1)
    dense = np.full(m, np.nan)
    if debug:
        # the dense grid certifies the analytic path from below
        d_ang, _ = _dense_corners(_flatten(v, np.ones_like(same)), TOL.dense_lambda_samples)
        dense = d_ang.reshape(m, nv).max(axis=1)
        bad = dense > values + 1e-9
        if np.any(bad):
            values = np.where(bad, dense, values)
            fallback |= bad
    return values.reshape(shape), margins.reshape(shape), fallback.reshape(shape), dense.reshape(shape)


def worst_case_analysis(
    eps_c: float, eps_l: float, eps_c_prime: float, eps_l_prime: float, construction: str = "literal", debug: bool = False
) -> WorstCase:
    values, margins, fallback, dense = worst_case_batch(eps_c, eps_l, eps_c_prime, eps_l_prime, construction, debug)
    return WorstCase(
        value=float(values),
        margin=float(margins),
        construction=construction,
        fallback=bool(fallback),
        dense_value=float(dense) if debug else None,
    )


def worst_case_delta_lambda(
    eps_c: float, eps_l: float, eps_c_prime: float, eps_l_prime: float, construction: str = "literal"
) -> float:
    """Largest ``|delta_lam|`` over error phases and ``lam``, clamped at pi/2."""
    return worst_case_analysis(eps_c, eps_l, eps_c_prime, eps_l_prime, construction).value


# ----------------------------------------------------------------------------
# brute-force oracle


def _phase_grid(resolution: int) -> np.ndarray:
    # nests under doubling of the resolution
    return np.arange(resolution) * (2 * math.pi / resolution)


def brute_force_delta_lambda(
    eps_c: float, eps_l: float, eps_c_prime: float, eps_l_prime: float, resolution: int = 32, chunk: int = 512
) -> float:
    """Max ``|delta_lam|`` over a grid of error phases, leak overlaps and ``lam``.

    Grids: ``eps_p``, ``eps_p'``, ``phase_u`` and ``lam`` on
    ``arange(r) * 2 pi / r``, ``u`` on ``linspace(0, 1, r + 1)``.  The c and s
    circuits share the leak overlap.  Values are clamped at pi/2.
    """
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    phases = _phase_grid(resolution)
    us = np.linspace(0.0, 1.0, resolution + 1)
    w = (us[:, None] * np.exp(1j * phases[None, :])).reshape(-1)
    d = eps_l * eps_l_prime
    # leak term 2 D Re(conj(X) w) + D^2 |w|^2 is linear in (Re w, Im w, |w|^2)
    basis = np.stack([np.ones_like(w.real), w.real, w.imag, np.abs(w) ** 2])
    no_leak = LeakageOverlap(0.0, 0.0)
    ep, epp = (g.ravel() for g in np.meshgrid(phases, phases, indexing="ij"))
    # in-subspace probabilities and overlaps at lam (cosine) and lam - pi/2 (sine)
    shifted = np.concatenate([phases, phases - HALF_PI])
    pin = np.empty((ep.size, shifted.size))
    x = np.empty((ep.size, shifted.size), dtype=complex)
    for i in range(ep.size):
        params = SpamParams(eps_c, ep[i], eps_l, eps_c_prime, epp[i], eps_l_prime)
        pin[i] = exact_erroneous_probability(shifted, params, no_leak)
        x[i] = subspace_overlap(shifted, params)
    base = 2.0 * pin - 1.0 - np.cos(shifted)
    r = resolution
    best = 0.0
    for k, lam in enumerate(phases):
        c, s = math.cos(lam), math.sin(lam)
        coef = []
        for j in (k, k + r):
            coef.append(np.stack([base[:, j], 4 * d * x[:, j].real, 4 * d * x[:, j].imag, np.full(ep.size, 2 * d * d)], axis=1))
        dc, ds = coef
        # rotate (Delta_c, Delta_s) into the (n, n_perp) frame
        d1 = c * dc + s * ds
        d1[:, 0] += 1.0
        d2 = c * ds - s * dc
        for start in range(0, ep.size, chunk):
            rows = slice(start, start + chunk)
            a1 = d1[rows] @ basis
            a2 = d2[rows] @ basis
            if np.any(a1 <= 0.0):
                return HALF_PI
            best = max(best, float(np.max(np.abs(a2) / a1)))
    return min(math.atan(best), HALF_PI)


# ----------------------------------------------------------------------------
# success-region maps


@dataclass
class RobustnessGrid:
    """Worst-case ``|delta_lam|`` on the tied slice ``eps_c = eps_c'``, ``eps_l = eps_l'``.

    ``values[i, j]`` belongs to ``axis_eps_c[i]`` and ``axis_eps_l[j]``.
    """

    axis_eps_c: np.ndarray
    axis_eps_l: np.ndarray
    values: np.ndarray
    construction: str = "literal"
    fallback: np.ndarray | None = None
    contour: list[np.ndarray] = field(default_factory=list)

    def axis_crossing(self, axis: str, level: float = THIRD_PI) -> float | None:
        """Error probability (``eps**2``) where the grid first reaches ``level`` on an axis.

        Linear interpolation in ``eps`` between the bracketing samples; None
        if the level is never reached.
        """
        if axis == "eps_c":
            eps, vals = self.axis_eps_c, self.values[:, 0]
        elif axis == "eps_l":
            eps, vals = self.axis_eps_l, self.values[0, :]
        else:
            raise ValueError("axis must be 'eps_c' or 'eps_l'")
        hit = np.flatnonzero(vals >= level)
        if hit.size == 0:
            return None
        i = int(hit[0])
        if i == 0:
            return float(eps[0] ** 2)
        t = (level - vals[i - 1]) / (vals[i] - vals[i - 1])
        e = eps[i - 1] + t * (eps[i] - eps[i - 1])
        return float(e**2)

    def monotonicity_violations(self, tol: float = 1e-12) -> int:
        """Number of adjacent pairs where the map decreases moving away from the origin."""
        return int(np.sum(np.diff(self.values, axis=0) < -tol) + np.sum(np.diff(self.values, axis=1) < -tol))

    def to_csv(self) -> str:
        lines = ["eps_c,eps_l,delta_lambda_max"]
        for i, ec in enumerate(self.axis_eps_c):
            for j, el in enumerate(self.axis_eps_l):
                lines.append(f"{ec:.17g},{el:.17g},{self.values[i, j]:.17g}")
        return "\n".join(lines) + "\n"

    def contour_csv(self) -> str:
        lines = ["segment,eps_c,eps_l"]
        for k, seg in enumerate(self.contour):
            for ec, el in seg:
                lines.append(f"{k},{ec:.17g},{el:.17g}")
        return "\n".join(lines) + "\n"


def worker_count() -> int:
    """Parallelism cap from ``RPE_LAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("RPE_LAB_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"RPE_LAB_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _grid_block(args):
    ec, el, construction = args
    values, _, fallback, _ = worst_case_batch(ec, el, ec, el, construction)
    return values, fallback


def level_contour(axis_eps_c, axis_eps_l, values, level: float = THIRD_PI) -> list[np.ndarray]:
    """Polylines ``(eps_c, eps_l)`` of a level set of the map."""
    import contourpy

    gen = contourpy.contour_generator(x=axis_eps_l, y=axis_eps_c, z=values, line_type="Separate")
    return [np.asarray(seg)[:, ::-1] for seg in gen.lines(level)]


def success_region(
    n: int = 201,
    max_eps: float = 0.5,
    construction: str = "literal",
    workers: int | None = None,
    block: int = 2048,
) -> RobustnessGrid:
    """Worst-case map over ``[0, max_eps]**2`` with primed amplitudes tied to unprimed ones."""
    _check_construction(construction)
    if n < 2:
        raise ValueError("grid needs at least 2 points per axis")
    if not (0.0 <= max_eps and 2 * max_eps**2 <= 1.0):
        raise ValueError("max_eps must satisfy 0 <= max_eps and 2 max_eps^2 <= 1")
    axis = np.linspace(0.0, max_eps, n)
    ec, el = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
    tasks = [(ec[i : i + block], el[i : i + block], construction) for i in range(0, ec.size, block)]
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_block, tasks))
    else:
        results = [_grid_block(t) for t in tasks]
    values = np.concatenate([r[0] for r in results]).reshape(n, n)
    fallback = np.concatenate([r[1] for r in results]).reshape(n, n)
    contour = level_contour(axis, axis, values) if max_eps > 0 else []
    return RobustnessGrid(axis, axis.copy(), values, construction, fallback, contour)


def axis_threshold(axis: str, construction: str = "literal", level: float = THIRD_PI, p_max: float = 0.5) -> float:
    """Error probability at which the tied worst case first reaches ``level`` on one axis.

    Scans ``eps**2`` on a fine grid, then bisects the first bracket.
    """
    _check_construction(construction)

    def value(p):
        e = np.sqrt(np.asarray(p, dtype=float))
        z = np.zeros_like(e)
        if axis == "eps_c":
            return worst_case_batch(e, z, e, z, construction)[0]
        if axis == "eps_l":
            return worst_case_batch(z, e, z, e, construction)[0]
        raise ValueError("axis must be 'eps_c' or 'eps_l'")

    ps = np.linspace(0.0, p_max, 1001)
    vals = value(ps)
    hit = np.flatnonzero(vals >= level)
    if hit.size == 0:
        return math.inf
    i = int(hit[0])
    if i == 0:
        return 0.0
    lo, hi = ps[i - 1], ps[i]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if value(mid) >= level:
            hi = mid
        else:
            lo = mid
    return float(hi)
