"""Independent reference implementations used by the tests.

Nothing here imports the code under test beyond plain data containers;
each oracle takes a different route (determinants, explicit loops,
Rodrigues' formula, brute-force scans) to the same quantity.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np


# -- exterior algebra via determinants ----------------------------------------------

def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries), via a determinant."""
    order = np.argsort(seq)
    P = np.eye(len(seq))[order]
    return int(round(np.linalg.det(P))) if len(seq) else 1


def wedge_oracle(a, b, m, k, l):
    A, B = list(combinations(range(m), k)), list(combinations(range(m), l))
    out_basis = {idx: n for n, idx in enumerate(combinations(range(m), k + l))}
    out = np.zeros(len(out_basis))
    for i, ia in enumerate(A):
        for j, jb in enumerate(B):
            if set(ia) & set(jb):
                continue
            cat = ia + jb
            out[out_basis[tuple(sorted(cat))]] += perm_sign(cat) * a[i] * b[j]
    return out


def hodge_oracle(a, m, k):
    basis_k = list(combinations(range(m), k))
    out_basis = {idx: n for n, idx in enumerate(combinations(range(m), m - k))}
    out = np.zeros(len(out_basis))
    for i, ia in enumerate(basis_k):
        rest = tuple(x for x in range(m) if x not in ia)
        out[out_basis[rest]] += perm_sign(ia + rest) * a[i]
    return out


def generator_coeffs(vectors, m):
    """Coefficients of v1 ^ ... ^ vk: the k x k minors of the stacked vectors."""
    V = np.asarray(vectors, dtype=float).reshape(-1, m)
    k = V.shape[0]
    return np.array([np.linalg.det(V[:, list(idx)]) for idx in combinations(range(m), k)])


# -- rotations ---------------------------------------------------------------------------

def rodrigues(angle, axis):
    n = np.asarray(axis, dtype=float)
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


# -- grid operators with explicit loops (2D) ---------------------------------------------

def grad_loop(f, h):
    nx, ny = f.shape[:2]
    tail = f.shape[2:]
    g = np.zeros((nx, ny) + tail + (2,))
    for i in range(nx):
        for j in range(ny):
            if i + 1 < nx:
                g[i, j, ..., 0] = (f[i + 1, j] - f[i, j]) / h[0]
            if j + 1 < ny:
                g[i, j, ..., 1] = (f[i, j + 1] - f[i, j]) / h[1]
    return g


def div_loop(F, h):
    nx, ny = F.shape[:2]
    out = np.zeros(F.shape[:-1])
    for i in range(nx):
        for j in range(ny):
            fx_hi = F[i, j, ..., 0] if i + 1 < nx else 0.0
            fx_lo = F[i - 1, j, ..., 0] if i > 0 else 0.0
            fy_hi = F[i, j, ..., 1] if j + 1 < ny else 0.0
            fy_lo = F[i, j - 1, ..., 1] if j > 0 else 0.0
            out[i, j] = (fx_hi - fx_lo) / h[0] + (fy_hi - fy_lo) / h[1]
    return out


def energy_loop(eta, u, h, kappa, eps, nu, delta, c0=0.1, c1=1.0):
    """Total regularized energy with the quadratic model functions, cell by cell."""
    nx, ny = eta.shape
    vol = h[0] * h[1]
    total = 0.0
    for i in range(nx):
        for j in range(ny):
            ge = [0.0, 0.0]
            gu = np.zeros((u.shape[-1], 2))
            if i + 1 < nx:
                ge[0] = (eta[i + 1, j] - eta[i, j]) / h[0]
                gu[:, 0] = (u[i + 1, j] - u[i, j]) / h[0]
            if j + 1 < ny:
                ge[1] = (eta[i, j + 1] - eta[i, j]) / h[1]
                gu[:, 1] = (u[i, j + 1] - u[i, j]) / h[1]
            s = eta[i, j]
            w2 = float(np.sum(gu * gu))
            d = 0.5 * (ge[0] ** 2 + ge[1] ** 2) + 0.5 * (1 - s) ** 2
            d += (c0 + c1 * s * s) * math.sqrt(eps * eps + w2) + 0.5 * kappa ** 2 * w2
            d += (nu * math.sqrt(w2)) ** 3 / 3
            if delta > 0:
                d += (float(u[i, j] @ u[i, j]) - 1) ** 2 / (4 * delta)
            total += d * vol
    return total


# -- proximal map of the sphere penalty ----------------------------------------------------

def radial_prox_scan(u_prev, delta, dt, samples=100_000, zooms=4):
    """Minimizer of ``(|v|^2 - 1)^2 / (4 delta) + |v - u_prev|^2 / (2 dt)`` by scanning.

    The minimizer is parallel to ``u_prev`` (the penalty is radial and the
    distance term is smallest along the ray), so a 1D scan over the length
    suffices; each zoom rescans a window of a few grid cells around the best
    sample.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    r0 = float(np.linalg.norm(u_prev))
    d = u_prev / r0

    def J(s):
        return (s * s - 1) ** 2 / (4 * delta) + (s - r0) ** 2 / (2 * dt)

    lo, hi = 0.0, max(1.5, r0 + 1.0)
    for _ in range(zooms + 1):
        s = np.linspace(lo, hi, samples)
        k = int(np.argmin(J(s)))
        step = s[1] - s[0]
        lo, hi = max(s[k] - 2 * step, 0.0), s[k] + 2 * step
    return s[k] * d
