"""Seeded property suites shared by ``orientflow selftest`` and the test-suite.

Each suite draws its cases from ``numpy.random.default_rng(seed)`` and
returns a :class:`SuiteResult` with one :class:`GroupResult` per property.
Residuals are relative (divided by ``1 + scale`` of the inputs).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import exterior as ex
from . import rotrep as rr
from .energy import grad_check
from .grid import Grid, random_smooth_pair
from .model import (ModelParams, default_model_functions, f_eps, grad_f_eps, pi_delta, r_zero,
                    sgn_selection, validate_functions, varpi_delta)

EXTERIOR_TOL = 1e-12
ROTATION_TOL = 1e-10
GRADCHECK_TOL = 1e-5
MAX_ECHO = 5


@dataclass
class Failure:
    case: int
    inputs: dict
    residual: float

    def describe(self) -> str:
        parts = ", ".join(f"{k}={np.array2string(np.asarray(v), precision=17, separator=',')}"
                          for k, v in self.inputs.items())
        return f"case {self.case}: residual {self.residual:.3e} ({parts})"


@dataclass
class GroupResult:
    name: str
    count: int = 0
    n_failed: int = 0
    worst: float = 0.0
    tol: float = 0.0
    failures: list[Failure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_failed == 0

    def add(self, residuals: np.ndarray, tol: float, inputs_of) -> None:
        """Record a batch of residuals; ``inputs_of(i)`` rebuilds the inputs of case ``i``.

        Only the first few failing cases are kept for echoing.
        """
        residuals = np.asarray(residuals, dtype=float).ravel()
        self.tol = tol
        bad = np.flatnonzero(~(residuals <= tol))
        for i in bad[: max(MAX_ECHO - len(self.failures), 0)]:
            self.failures.append(Failure(self.count + int(i), inputs_of(int(i)), float(residuals[i])))
        self.n_failed += len(bad)
        self.count += residuals.size
        if residuals.size:
            worst = float(np.max(residuals)) if np.all(np.isfinite(residuals)) else math.inf
            self.worst = max(self.worst, worst)


@dataclass
class SuiteResult:
    name: str
    groups: list[GroupResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def count(self) -> int:
        return sum(g.count for g in self.groups)

    def group(self, name: str) -> GroupResult:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)


# -- exterior algebra ---------------------------------------------------------------

def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def _grouped(rng, n, draw):
    """Draw ``n`` shape tuples with ``draw(rng)`` and yield (shape, count) groups in sorted order."""
    shapes = [draw(rng) for _ in range(n)]
    keys, counts = np.unique(np.array(shapes), axis=0, return_counts=True)
    return [(tuple(int(x) for x in k), int(c)) for k, c in zip(keys, counts)]


def run_exterior(seed: int = 0, n: int = 10_000, tol: float = EXTERIOR_TOL, m_max: int = 6) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    groups = {name: GroupResult(name) for name in
              ("wedge-comm", "double-hodge", "triple-product", "star-projection", "hodge-inner", "norm-hodge",
               "generator-cauchy-schwarz", "wedge-associativity")}

    def two_grades(r):
        m = int(r.integers(2, m_max + 1))
        k = int(r.integers(0, m + 1))
        l = int(r.integers(0, m - k + 1))
        return m, k, l

    for (m, k, l), c in _grouped(rng, n, two_grades):
        a = rng.standard_normal((c, comb(m, k)))
        b = rng.standard_normal((c, comb(m, l)))
        lhs = ex.wedge_coeffs(a, b, m, k, l)
        rhs = (-1) ** (k * l) * ex.wedge_coeffs(b, a, m, l, k)
        res = _norm(lhs - rhs) / (1 + _norm(a) * _norm(b))
        groups["wedge-comm"].add(res, tol, lambda i: {"m": m, "k": k, "l": l, "a": a[i], "b": b[i]})

    def one_grade(r):
        m = int(r.integers(2, m_max + 1))
        return m, int(r.integers(0, m + 1))

    for (m, k), c in _grouped(rng, n, one_grade):
        lam = rng.standard_normal((c, comb(m, k)))
        twice = ex.hodge_coeffs(ex.hodge_coeffs(lam, m, k), m, m - k)
        res = _norm(twice - (-1) ** (k * (m - k)) * lam) / (1 + _norm(lam))
        groups["double-hodge"].add(res, tol, lambda i: {"m": m, "k": k, "lam": lam[i]})

    for (m, k), c in _grouped(rng, n, one_grade):
        lam = rng.standard_normal((c, comb(m, k)))
        mu = rng.standard_normal((c, comb(m, k)))
        top = ex.wedge_coeffs(lam, ex.hodge_coeffs(mu, m, k), m, k, m - k)[..., 0]
        res = np.abs(np.sum(lam * mu, axis=-1) - top) / (1 + _norm(lam) * _norm(mu))
        groups["hodge-inner"].add(res, tol, lambda i: {"m": m, "k": k, "lam": lam[i], "mu": mu[i]})

    for (m, k), c in _grouped(rng, n, one_grade):
        lam = rng.standard_normal((c, comb(m, k)))
        res = np.abs(_norm(ex.hodge_coeffs(lam, m, k)) - _norm(lam)) / (1 + _norm(lam))
        groups["norm-hodge"].add(res, tol, lambda i: {"m": m, "k": k, "lam": lam[i]})

    def dim_only(r):
        return (int(r.integers(2, m_max + 1)),)

    for (m,), c in _grouped(rng, n, dim_only):
        a, b, d = (rng.standard_normal((c, m)) for _ in range(3))
        res = _norm(ex._triple_residual_batch(a, b, d)) / (1 + _norm(a) * _norm(b) * _norm(d))
        groups["triple-product"].add(res, tol, lambda i: {"m": m, "a": a[i], "b": b[i], "c": d[i]})

    for (m,), c in _grouped(rng, n, dim_only):
        a, b = rng.standard_normal((c, m)), rng.standard_normal((c, m))
        res = _norm(ex._star_projection_batch(a, b)) / (1 + _norm(a) * _norm(b) ** 2)
        groups["star-projection"].add(res, tol, lambda i: {"m": m, "a": a[i], "b": b[i]})

    def gen_grades(r):
        m = int(r.integers(2, m_max + 1))
        j = int(r.integers(1, m + 1))
        return m, j, int(r.integers(0, m - j + 1))

    for (m, j, l), c in _grouped(rng, n, gen_grades):
        vs = rng.standard_normal((j, c, m))
        g = vs[0]
        for q in range(1, j):
            g = ex.wedge_coeffs(g, vs[q], m, q, 1)
        eta = rng.standard_normal((c, comb(m, l)))
        prod = ex.wedge_coeffs(g, eta, m, j, l)
        scale = _norm(g) * _norm(eta)
        res = np.maximum(_norm(prod) - scale, 0.0) / (1 + scale)
        groups["generator-cauchy-schwarz"].add(
            res, tol, lambda i: {"m": m, "j": j, "l": l, "vectors": vs[:, i], "eta": eta[i]})

    for (m,), c in _grouped(rng, n, lambda r: (int(r.integers(3, m_max + 1)),)):
        u1, u2, u3 = (rng.standard_normal((c, m)) for _ in range(3))
        left = ex.wedge_coeffs(ex.vector_wedge(u1, u2), u3, m, 2, 1)
        right = ex.wedge_coeffs(u1, ex.vector_wedge(u2, u3), m, 1, 2)
        res = _norm(left - right) / (1 + _norm(u1) * _norm(u2) * _norm(u3))
        groups["wedge-associativity"].add(res, tol, lambda i: {"m": m, "u1": u1[i], "u2": u2[i], "u3": u3[i]})

    return SuiteResult("exterior", list(groups.values()), time.perf_counter() - t0)


# -- rotations ------------------------------------------------------------------------

def random_unit_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_axis_angles(rng: np.random.Generator, n: int, max_angle: float = 3.0) -> list[rr.AxisAngle]:
    axes = rng.standard_normal((n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, n)
    return [rr.AxisAngle(float(w), tuple(ax)) for w, ax in zip(angles, axes)]


def run_rotrep(seed: int = 0, n: int = 1000, tol: float = ROTATION_TOL) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    out = []

    g = GroupResult("homomorphism")
    q1, q2 = random_unit_quaternions(rng, n), random_unit_quaternions(rng, n)
    res = np.array([np.max(np.abs(rr.quat_to_rotmat(rr.quat_mul(a, b))
                                  - rr.quat_to_rotmat(a) @ rr.quat_to_rotmat(b))) for a, b in zip(q1, q2)])
    g.add(res, tol, lambda i: {"q1": q1[i], "q2": q2[i]})
    out.append(g)

    g = GroupResult("double-cover")
    q = random_unit_quaternions(rng, n)
    res = []
    for a in q:
        R = rr.quat_to_rotmat(a)
        lift = rr.rotmat_to_quat(R)
        # the lift is one of the two preimages, and both preimages give R
        res.append(max(np.max(np.abs(R - rr.quat_to_rotmat(-a))),
                       min(np.max(np.abs(lift - a)), np.max(np.abs(lift + a)))))
    g.add(np.array(res), tol, lambda i: {"q": q[i]})
    out.append(g)

    g = GroupResult("round-trip")
    aas = random_axis_angles(rng, n)
    res = []
    for aa in aas:
        qa = rr.axisangle_to_quat(aa)
        back = rr.rotmat_to_quat(rr.quat_to_rotmat(qa))
        res.append(np.max(np.abs(back - qa)))
    g.add(np.array(res), tol, lambda i: {"angle": aas[i].angle, "axis": aas[i].axis})
    out.append(g)

    g = GroupResult("angle-recovery")
    # 2 acos(q0) is ill-conditioned for tiny angles; keep those to the atan2 form
    res = np.array([abs(2 * math.acos(min(rr.axisangle_to_quat(aa)[0], 1.0)) - aa.angle)
                    if aa.angle > 1e-3 else
                    abs(rr.quat_to_axisangle(rr.axisangle_to_quat(aa)).angle - aa.angle) for aa in aas])
    g.add(res, tol, lambda i: {"angle": aas[i].angle, "axis": aas[i].axis})
    out.append(g)

    g = GroupResult("equator-ambiguity")
    axes = rng.standard_normal((max(n // 10, 1), 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    res = []
    for ax in axes:
        R = rr.quat_to_rotmat(np.concatenate(([0.0], ax)))
        try:
            rr.rotmat_to_quat(R)
            res.append(1.0)
        except rr.AmbiguousRotationError:
            res.append(0.0)
    g.add(np.array(res), 0.0, lambda i: {"axis": axes[i]})
    out.append(g)

    g = GroupResult("cap-ball")
    M = 4
    pts = random_unit_quaternions(rng, n)
    rs = rng.uniform(0.05, 0.95, n)
    res = np.array([float(rr.in_cap(p, r) != (rr.radial_coordinate(p) <= math.acos(r)))
                    for p, r in zip(pts, rs)])
    g.add(res, 0.0, lambda i: {"p": pts[i], "r": rs[i]})
    out.append(g)

    g = GroupResult("exp-map-distance")
    base = random_unit_quaternions(rng, n)
    v = rng.standard_normal((n, M))
    v -= np.sum(v * base, axis=1, keepdims=True) * base
    v *= (rng.uniform(0, 3.0, n) / np.linalg.norm(v, axis=1))[:, None]
    res = np.array([abs(rr.geodesic_dist(b, rr.exp_map(b, w)) - np.linalg.norm(w)) for b, w in zip(base, v)])
    g.add(res, tol, lambda i: {"base": base[i], "v": v[i]})
    out.append(g)
    return SuiteResult("rotrep", out, time.perf_counter() - t0)


# -- model functions ------------------------------------------------------------------

def run_model(seed: int = 0, n: int = 200, step: float = 1e-6) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    out = []

    g = GroupResult("validate-functions")
    res = []
    for variant in ("quadratic", "constant-alpha"):
        try:
            validate_functions(default_model_functions(variant))
            res.append(0.0)
        except ValueError:
            res.append(1.0)
    g.add(np.array(res), 0.0, lambda i: {"variant": ("quadratic", "constant-alpha")[i]})
    out.append(g)

    g = GroupResult("f-eps-bounds")
    W = rng.standard_normal((n, 4, 2))
    eps = rng.uniform(0.01, 1.0, n)
    f = np.array([f_eps(w, e) for w, e in zip(W, eps)])
    nW = np.sqrt(np.sum(W * W, axis=(1, 2)))
    res = np.maximum.reduce([np.maximum(eps - f, 0), np.maximum(nW - f, 0),
                             np.maximum(f - nW - eps, 0)]) / (1 + f)
    g.add(res, 1e-14, lambda i: {"W": W[i], "eps": eps[i]})
    out.append(g)

    g = GroupResult("grad-f-eps")
    res = []
    for w, e in zip(W, eps):
        B = grad_f_eps(w, e)
        fd = np.zeros_like(w)
        for idx in np.ndindex(*w.shape):
            dw = np.zeros_like(w)
            dw[idx] = step
            fd[idx] = (f_eps(w + dw, e) - f_eps(w - dw, e)) / (2 * step)
        res.append(max(np.max(np.abs(B - fd)), max(np.linalg.norm(B) - 1.0, 0.0)))
    g.add(np.array(res), 1e-7, lambda i: {"W": W[i], "eps": eps[i]})
    out.append(g)

    g = GroupResult("sgn-selection")
    Wz = W.copy()
    Wz[: n // 4] = 0.0
    sel = sgn_selection(Wz)
    ns = np.sqrt(np.sum(sel * sel, axis=(1, 2)))
    res = np.where(np.sqrt(np.sum(Wz * Wz, axis=(1, 2))) > 0, np.abs(ns - 1.0), ns)
    g.add(res, 1e-14, lambda i: {"W": Wz[i]})
    out.append(g)

    g = GroupResult("penalty-derivative")
    w = rng.standard_normal((n, 4))
    delta = rng.uniform(0.01, 1.0, n)
    res = []
    for x, d in zip(w, delta):
        fd = np.array([(pi_delta(x + step * e, d) - pi_delta(x - step * e, d)) / (2 * step) for e in np.eye(4)])
        an = varpi_delta(x, d)
        res.append(np.max(np.abs(fd - an)) / (1 + np.max(np.abs(an))))
    g.add(np.array(res), 1e-6, lambda i: {"w": w[i], "delta": delta[i]})
    out.append(g)

    g = GroupResult("r-zero")
    kap = rng.uniform(0.2, 5.0, n)
    res = np.array([abs(r_zero(ModelParams(kappa=k)) - (1 + 2 * 16.0 / k ** 2)) for k in kap])
    g.add(res, 1e-12, lambda i: {"kappa": kap[i]})
    out.append(g)
    return SuiteResult("model", out, time.perf_counter() - t0)


# -- first variation ----------------------------------------------------------------------

def gradcheck_states(seed: int = 0, n_states: int = 20):
    """``(U, params)`` pairs on an 8 x 8 grid alternating ``nu`` between 0 and 0.3."""
    rng = np.random.default_rng(seed)
    grid = Grid((8, 8), (0.125, 0.125))
    for i in range(n_states):
        params = ModelParams(kappa=1.0, eps=0.1, delta=0.1, nu=(0.0, 0.3)[i % 2], M=4)
        yield random_smooth_pair(grid, 4, rng, sweeps=2), params


def run_gradcheck(seed: int = 0, n_states: int = 20, tol: float = GRADCHECK_TOL) -> SuiteResult:
    t0 = time.perf_counter()
    g = GroupResult("grad-check")
    for i, (U, params) in enumerate(gradcheck_states(seed, n_states)):
        err = grad_check(U, params, seed=seed + i)
        g.add(np.array([err]), tol, lambda _, nu=params.nu, i=i: {"state": i, "nu": nu})
    return SuiteResult("gradcheck", [g], time.perf_counter() - t0)


SUITES = {
    "exterior": run_exterior,
    "rotrep": run_rotrep,
    "model": run_model,
    "gradcheck": run_gradcheck,
}
