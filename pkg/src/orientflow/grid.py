"""Uniform cell-centred grids with homogeneous Neumann boundaries.

A :class:`FieldPair` holds the order field ``eta`` (shape ``dims``) and the
orientation field ``u`` (shape ``dims + (M,)``).  Gradients are forward
differences with a mirrored ghost cell past the last face, so no flux
crosses the boundary, and ``div`` is the negative adjoint of ``grad`` under
the cell-volume inner product.  The discrete Green formula
``<div F, v> = -<F, grad v>`` therefore holds to rounding, which is what the
energy identities downstream rely on.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .model import ModelParams
from .rotrep import exp_map, geodesic_dist, north_pole, slerp


class GridError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    h: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        h = tuple(float(x) for x in np.broadcast_to(np.asarray(self.h, dtype=float), (len(dims),)))
        if not 1 <= len(dims) <= 3:
            raise GridError(f"grid must have 1 to 3 axes, got {len(dims)}")
        # a single cell along every axis is allowed: it is the pointwise problem
        if any(d < 1 for d in dims):
            raise GridError(f"cell counts must be positive, got {dims}")
        if any(x <= 0 for x in h):
            raise GridError(f"grid spacing must be positive, got {h}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "h", h)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def ncells(self) -> int:
        return math.prod(self.dims)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def volume(self) -> float:
        return self.ncells * self.cell_volume

    @property
    def h_min(self) -> float:
        return min(self.h)

    def centers(self) -> list[np.ndarray]:
        """Cell-centre coordinates, one broadcastable array per axis."""
        axes = [(np.arange(n) + 0.5) * hx for n, hx in zip(self.dims, self.h)]
        return np.meshgrid(*axes, indexing="ij")

    def extent(self) -> tuple[float, ...]:
        return tuple(n * hx for n, hx in zip(self.dims, self.h))


@dataclass
class FieldPair:
    eta: np.ndarray
    u: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.eta.shape != self.grid.dims:
            raise GridError(f"eta has shape {self.eta.shape}, grid is {self.grid.dims}")
        if self.u.shape[:-1] != self.grid.dims or self.u.ndim != self.grid.ndim + 1:
            raise GridError(f"u has shape {self.u.shape}, grid is {self.grid.dims}")

    @property
    def M(self) -> int:
        return self.u.shape[-1]

    def copy(self) -> "FieldPair":
        return FieldPair(self.eta.copy(), self.u.copy(), self.grid)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.u)))

    def __add__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.eta + other.eta, self.u + other.u, self.grid)

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.eta - other.eta, self.u - other.u, self.grid)

    def __mul__(self, s: float) -> "FieldPair":
        return FieldPair(self.eta * s, self.u * s, self.grid)

    __rmul__ = __mul__

    def axpy(self, a: float, d: "FieldPair") -> "FieldPair":
        """``self + a * d``."""
        return FieldPair(self.eta + a * d.eta, self.u + a * d.u, self.grid)


def _check_same(grid: Grid, *arrays: np.ndarray) -> None:
    for a in arrays:
        if a.shape[: grid.ndim] != grid.dims:
            raise GridError(f"field of shape {a.shape} does not live on grid {grid.dims}")


def grad(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-cell gradient: ``dims + (N,)`` for scalars, ``dims + (M, N)`` for vectors."""
    _check_same(grid, f)
    if f.ndim == grid.ndim:
        return kernels.grad(f[..., None], grid.h)[..., 0, :]
    return kernels.grad(f, grid.h)


def div(F: np.ndarray, grid: Grid) -> np.ndarray:
    _check_same(grid, F)
    if F.ndim == grid.ndim + 1:
        return kernels.div(F[..., None, :], grid.h)[..., 0]
    return kernels.div(F, grid.h)


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    scalar = f.ndim == grid.ndim
    v = f[..., None] if scalar else f
    out = kernels.div_coef_grad(v, np.ones(grid.dims), grid.h)
    return out[..., 0] if scalar else out


def inner(f, g, grid: Grid) -> float:
    if isinstance(f, FieldPair):
        if f.grid != g.grid or f.grid != grid:
            raise GridError("field pairs live on different grids")
        return inner(f.eta, g.eta, grid) + inner(f.u, g.u, grid)
    f, g = np.asarray(f), np.asarray(g)
    if f.shape != g.shape:
        raise GridError(f"shape mismatch: {f.shape} vs {g.shape}")
    _check_same(grid, f)
    return float(np.sum(f * g) * grid.cell_volume)


def norm_L2(f, grid: Grid) -> float:
    return math.sqrt(max(inner(f, f, grid), 0.0))


def integrate(f: np.ndarray, grid: Grid) -> float:
    f = np.asarray(f, dtype=float)
    _check_same(grid, f)
    return float(np.sum(f) * grid.cell_volume)


def solve_shifted_laplacian(b: np.ndarray, a: float, grid: Grid, tol: float = 1e-12,
                            maxiter: int = 2000) -> tuple[np.ndarray, int]:
    """Conjugate gradients for ``(I - a Lap) x = b`` (all components at once).

    Returns the solution and the iteration count.  ``tol`` bounds the
    residual relative to ``|b|``.
    """
    if a < 0:
        raise SolverError("shift must be nonnegative for an SPD system")
    scalar = b.ndim == grid.ndim
    rhs = b[..., None] if scalar else b
    ones = np.ones(grid.dims)

    def apply(x):
        return x - a * kernels.div_coef_grad(x, ones, grid.h)

    x = rhs.copy()
    r = rhs - apply(x)
    bnorm = math.sqrt(float(np.sum(rhs * rhs)))
    target = tol * bnorm
    rr = float(np.sum(r * r))
    it = 0
    if math.sqrt(rr) > target:
        p = r.copy()
        for it in range(1, maxiter + 1):
            Ap = apply(p)
            step = rr / float(np.sum(p * Ap))
            x += step * p
            r -= step * Ap
            rr_new = float(np.sum(r * r))
            if math.sqrt(rr_new) <= target:
                rr = rr_new
                break
            p = r + (rr_new / rr) * p
            rr = rr_new
        else:
            raise SolverError(
                f"CG did not reach relative residual {tol:g} in {maxiter} iterations "
                f"(residual {math.sqrt(rr) / max(bnorm, 1e-300):.3e})"
            )
    return (x[..., 0] if scalar else x), it


# -- initial data -------------------------------------------------------------

def default_grains(M: int, angle: float = 1.2) -> tuple[np.ndarray, np.ndarray]:
    """Two orientations at distance ``angle / 2`` from the pole.

    For ``M = 4`` these are the quaternions of rotations by ``angle`` about
    the z and x axes.
    """
    half = 0.5 * angle
    p0 = north_pole(M)
    ta = np.zeros(M)
    tb = np.zeros(M)
    if M == 4:
        ta[3] = half
        tb[1] = half
    elif M == 2:
        ta[1] = half
        tb[1] = -half
    else:
        ta[1] = half
        tb[2] = half
    return exp_map(p0, ta), exp_map(p0, tb)


def _neighbor_average(u: np.ndarray, grid: Grid) -> np.ndarray:
    total = u.copy()
    count = np.ones(grid.dims)
    for a in range(grid.ndim):
        if grid.dims[a] < 2:
            continue
        n = grid.dims[a]
        lo = [slice(None)] * grid.ndim
        hi = [slice(None)] * grid.ndim
        lo[a], hi[a] = slice(0, n - 1), slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        total[lo] += u[hi]
        total[hi] += u[lo]
        count[lo] += 1
        count[hi] += 1
    return total / count[..., None]


def make_initial(kind: str, grid: Grid, params: ModelParams, seed: int = 0, *,
                 eta0: float = 1.0, r: float = 0.5, sigma: float = 0.3, sweeps: int = 2,
                 grain_a=None, grain_b=None, width: float = 2.0, eta_min: float = 0.5,
                 axis: int = 0, position: float = 0.5) -> FieldPair:
    """Build initial data.

    Kinds: ``constant``, ``bicrystal`` (planar grain boundary with a tanh
    profile along ``axis``), ``random-cap`` (smoothed random orientations in
    the cap ``u[0] >= r``), and ``vortex`` (``u`` winds once around the
    domain centre in its first two components; every cell stays on the
    sphere because the centre sits on a cell vertex).
    """
    M = params.M
    dims = grid.dims
    p0 = north_pole(M)
    if kind == "constant":
        return FieldPair(np.full(dims, float(eta0)), np.broadcast_to(p0, dims + (M,)).copy(), grid)

    if kind == "bicrystal":
        if grain_a is None or grain_b is None:
            da, db = default_grains(M)
            grain_a = da if grain_a is None else grain_a
            grain_b = db if grain_b is None else grain_b
        grain_a = np.asarray(grain_a, dtype=float)
        grain_b = np.asarray(grain_b, dtype=float)
        if grain_a.size != M or grain_b.size != M:
            raise GridError(f"grain orientations must have {M} components")
        x = grid.centers()[axis]
        x0 = position * grid.extent()[axis]
        z = (x - x0) / width
        u = slerp(grain_a, grain_b, 0.5 * (1.0 + np.tanh(z)))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        if geodesic_dist(grain_a, grain_b) < 1e-12:
            eta = np.full(dims, float(eta0))
        else:
            eta = eta0 - (eta0 - eta_min) / np.cosh(z) ** 2
        return FieldPair(eta, u, grid)

    if kind == "random-cap":
        if not 0.0 < r < 1.0:
            raise GridError(f"cap parameter must lie in (0, 1), got {r}")
        radius = math.acos(r)
        if not 0.0 < sigma < radius:
            raise GridError(
                f"sigma = {sigma} is inconsistent with cap r = {r} (needs 0 < sigma < {radius:.4f})"
            )
        rng = np.random.default_rng(seed)
        v = np.zeros(dims + (M,))
        v[..., 1:] = sigma * rng.standard_normal(dims + (M - 1,))
        t = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.where(t > radius, radius / np.where(t > 0, t, 1.0), 1.0)
        v *= scale
        t = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(t > 0, t, 1.0)
        u = np.cos(t) * p0 + np.where(t > 0, np.sin(t) / safe, 0.0) * v
        for _ in range(sweeps):
            # normalized averages of cap points stay in the cap (convex cone)
            u = _neighbor_average(u, grid)
            u /= np.linalg.norm(u, axis=-1, keepdims=True)
        u = np.where(u[..., :1] < r, _project_to_cap(u, r), u)
        return FieldPair(np.full(dims, float(eta0)), u, grid)

    if kind == "vortex":
        if grid.ndim < 2:
            raise GridError("vortex initial data needs at least two space dimensions")
        c = grid.centers()
        ext = grid.extent()
        dx = c[0] - 0.5 * ext[0]
        dy = c[1] - 0.5 * ext[1]
        rad = np.hypot(dx, dy)
        if np.any(rad == 0):
            raise GridError("vortex centre coincides with a cell centre; use even cell counts")
        u = np.zeros(dims + (M,))
        u[..., 0] = dx / rad
        u[..., 1] = dy / rad
        return FieldPair(np.full(dims, float(eta0)), u, grid)

    raise GridError(f"unknown initial data kind {kind!r}")


def _project_to_cap(u: np.ndarray, r: float) -> np.ndarray:
    """Pull points onto the cap boundary along great circles through the pole."""
    tang = u[..., 1:]
    tn = np.linalg.norm(tang, axis=-1, keepdims=True)
    out = np.empty_like(u)
    out[..., :1] = r
    out[..., 1:] = math.sqrt(1 - r * r) * tang / np.where(tn > 0, tn, 1.0)
    return out


def random_smooth_pair(grid: Grid, M: int, rng: np.random.Generator, *, sweeps: int = 3,
                       u_scale: float = 1.0) -> FieldPair:
    """Smooth random state with ``eta`` in (0, 1) and ``|u|`` near ``u_scale``."""
    eta = rng.standard_normal(grid.dims)
    u = rng.standard_normal(grid.dims + (M,))
    for _ in range(sweeps):
        eta = _neighbor_average(eta[..., None], grid)[..., 0]
        u = _neighbor_average(u, grid)
    eta = 0.5 + 0.4 * np.tanh(eta)
    u = u_scale * u / np.maximum(np.linalg.norm(u, axis=-1, keepdims=True), 0.3)
    return FieldPair(eta, u, grid)


# -- snapshot files -----------------------------------------------------------

_HEADER = re.compile(r"dims=(\d+(?:x\d+){0,2}) M=(\d+) h=([^\s]+)")


def write_snapshot(path, U: FieldPair) -> None:
    g = U.grid
    header = "dims={} M={} h={}\n".format(
        "x".join(str(d) for d in g.dims), U.M, ",".join(repr(x) for x in g.h)
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(U.eta, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(U.u, dtype="<f8").tobytes())


def read_snapshot(path) -> FieldPair:
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    m = _HEADER.fullmatch(raw[:newline].decode("ascii").strip())
    if m is None:
        raise GridError(f"malformed snapshot header in {path}")
    dims = tuple(int(d) for d in m.group(1).split("x"))
    M = int(m.group(2))
    h = tuple(float(x) for x in m.group(3).split(","))
    data = np.frombuffer(raw[newline + 1:], dtype="<f8")
    n = math.prod(dims)
    if data.size != n * (M + 1):
        raise GridError(f"snapshot {path} holds {data.size} values, expected {n * (M + 1)}")
    grid = Grid(dims, h)
    return FieldPair(data[:n].reshape(dims).copy(), data[n:].reshape(dims + (M,)).copy(), grid)
