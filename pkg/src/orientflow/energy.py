"""Free energies and their discrete first variation.

The regularized energy of a state ``U = (eta, u)`` is the cell sum of

    |grad eta|^2 / 2 + G(eta) + alpha(eta) f_eps(grad u) + kappa^2 |grad u|^2 / 2
        + |nu grad u|^(N+1) / (N+1) + Pi_delta(u)

and :func:`flow_rhs` returns exactly minus its gradient in the cell-volume
inner product (the discrete Green formula makes the two agree to rounding).
The orientation flux is isotropic, ``Z = c grad u`` with the per-cell
coefficient

    c = alpha(eta) / f_eps(grad u) + kappa^2 + nu^(N+1) |grad u|^(N-1),

which is also what the explicit stability bounds are phrased in.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .grid import FieldPair, grad, integrate, laplacian
from .model import ModelParams, pi_delta, varpi_delta

SPHERE_TOL = 1e-8
# below this |grad u| the eps = 0 flux uses the zero selection of Sgn
ZERO_GRAD_TOL = 1e-14


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet_eta: float
    potential_G: float
    weighted_tv: float
    dirichlet_u: float
    nu_term: float
    gl_term: float

    @property
    def total(self) -> float:
        return (self.dirichlet_eta + self.potential_G + self.weighted_tv + self.dirichlet_u
                + self.nu_term + self.gl_term)

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls)) + ("total",)

    def as_row(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self)) + (self.total,)

    @classmethod
    def from_row(cls, row) -> "EnergyBreakdown":
        values = [float(x) for x in row]
        return cls(*values[: len(fields(cls))])


@dataclass
class FlowRHS:
    d_eta: np.ndarray
    d_u: np.ndarray
    coef: np.ndarray
    grad_u: np.ndarray
    div_Z: np.ndarray
    mu: np.ndarray | None = None

    @property
    def flux_Z(self) -> np.ndarray:
        return self.coef[..., None, None] * self.grad_u

    def as_pair(self, grid) -> FieldPair:
        return FieldPair(self.d_eta, self.d_u, grid)


def _sphere_defect(u: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.norm(u, axis=-1) - 1.0))) if u.size else 0.0


def energy_density(U: FieldPair, params: ModelParams) -> dict[str, np.ndarray]:
    """Per-cell energy densities, keyed like :class:`EnergyBreakdown`."""
    funcs = params.funcs
    funcs.check_range(U.eta)
    grid = U.grid
    ge = grad(U.eta, grid)
    gu2 = kernels.grad_sqnorm(U.u, grid.h)
    gnorm = np.sqrt(gu2)
    if params.delta > 0:
        gl = pi_delta(U.u, params.delta)
    else:
        if _sphere_defect(U.u) > SPHERE_TOL:
            raise EnergyError("energy is +inf: u leaves the unit sphere while delta = 0")
        gl = np.zeros(grid.dims)
    p = params.nu_exponent
    return {
        "dirichlet_eta": 0.5 * np.sum(ge * ge, axis=-1),
        "potential_G": funcs.G(U.eta),
        "weighted_tv": funcs.alpha(U.eta) * np.sqrt(params.eps ** 2 + gu2),
        "dirichlet_u": 0.5 * params.kappa ** 2 * gu2,
        "nu_term": (params.nu * gnorm) ** p / p if params.nu > 0 else np.zeros(grid.dims),
        "gl_term": gl,
    }


def energy_total(U: FieldPair, params: ModelParams) -> EnergyBreakdown:
    dens = energy_density(U, params)
    return EnergyBreakdown(**{k: integrate(v, U.grid) for k, v in dens.items()})


def energy_convex_part(U: FieldPair, params: ModelParams) -> float:
    """Convex part of the splitting energy = convex part + perturbation potential."""
    if not params.delta > 0:
        raise EnergyError("convex splitting needs delta > 0")
    funcs = params.funcs
    funcs.check_range(U.eta)
    grid = U.grid
    ge = grad(U.eta, grid)
    gu2 = kernels.grad_sqnorm(U.u, grid.h)
    k = params.kappa
    p = params.nu_exponent
    sq = np.sum(U.u * U.u, axis=-1)
    dens = (0.5 * np.sum(ge * ge, axis=-1)
            + 0.5 * (k * np.sqrt(params.eps ** 2 + gu2) + funcs.alpha(U.eta) / k) ** 2
            + (params.nu * np.sqrt(gu2)) ** p / p
            + sq * sq / (4.0 * params.delta))
    return integrate(dens, grid)


def splitting_remainder(U: FieldPair, params: ModelParams) -> float:
    """``F - Phi``: the potential of the perturbation plus the constant ``kappa^2 eps^2 |Omega| / 2``.

    Expanding ``(kappa f + alpha / kappa)^2 / 2`` produces ``kappa^2 eps^2 / 2``
    per unit volume on top of the Dirichlet term, hence the constant.
    """
    funcs = params.funcs
    a = funcs.alpha(U.eta)
    sq = np.sum(U.u * U.u, axis=-1)
    dens = (funcs.G(U.eta) - a * a / (2 * params.kappa ** 2)
            + pi_delta(U.u, params.delta) - sq * sq / (4 * params.delta)
            - 0.5 * params.kappa ** 2 * params.eps ** 2)
    return integrate(dens, U.grid)


def perturbation(U: FieldPair, params: ModelParams) -> FieldPair:
    """Pointwise non-monotone perturbation ``(g - alpha alpha' / kappa^2, -u / delta)``."""
    if not params.delta > 0:
        raise EnergyError("perturbation needs delta > 0")
    funcs = params.funcs
    e = U.eta
    return FieldPair(funcs.g(e) - funcs.alpha(e) * funcs.alpha_prime(e) / params.kappa ** 2,
                     -U.u / params.delta, U.grid)


def flux_coefficient(eta: np.ndarray, gu2: np.ndarray, params: ModelParams) -> np.ndarray:
    a = params.funcs.alpha(eta)
    if params.eps > 0:
        tv = a / np.sqrt(params.eps ** 2 + gu2)
    else:
        n = np.sqrt(gu2)
        tv = np.where(n > ZERO_GRAD_TOL, a / np.where(n > ZERO_GRAD_TOL, n, 1.0), 0.0)
    c = tv + params.kappa ** 2
    if params.nu > 0:
        c = c + params.nu ** params.nu_exponent * np.sqrt(gu2) ** (params.dimN - 1)
    return c


def flow_rhs(U: FieldPair, params: ModelParams, mode: str = "penalized") -> FlowRHS:
    """Right-hand side ``dU/dt`` of the penalized or the sphere-constrained flow.

    In constrained mode the multiplier is ``mu = -(div Z . u)`` per cell,
    which makes ``d_u`` tangent to the sphere exactly; it agrees with the
    pointwise ``Z : grad u`` up to the discretization error.
    """
    funcs = params.funcs
    funcs.check_range(U.eta)
    grid = U.grid
    if mode == "penalized":
        if not (params.delta > 0 and params.eps > 0):
            raise EnergyError("penalized mode needs delta > 0 and eps > 0")
    elif mode == "constrained":
        if _sphere_defect(U.u) > SPHERE_TOL:
            raise EnergyError("constrained mode needs |u| = 1 in every cell")
    else:
        raise EnergyError(f"unknown flow mode {mode!r}")

    gu = grad(U.u, grid)
    gu2 = np.sum(gu * gu, axis=(-2, -1))
    coef = flux_coefficient(U.eta, gu2, params)
    div_Z = kernels.div_coef_grad(U.u, coef, grid.h)
    fe = np.sqrt(params.eps ** 2 + gu2)
    d_eta = laplacian(U.eta, grid) - funcs.g(U.eta) - funcs.alpha_prime(U.eta) * fe
    if mode == "penalized":
        return FlowRHS(d_eta, div_Z - varpi_delta(U.u, params.delta), coef, gu, div_Z)
    mu = -np.sum(div_Z * U.u, axis=-1) / np.sum(U.u * U.u, axis=-1)
    return FlowRHS(d_eta, div_Z + mu[..., None] * U.u, coef, gu, div_Z, mu)


def pointwise_multiplier(rhs: FlowRHS) -> np.ndarray:
    """``Z : grad u`` per cell."""
    return rhs.coef * np.sum(rhs.grad_u * rhs.grad_u, axis=(-2, -1))


def grad_check(U: FieldPair, params: ModelParams, n_probe: int = 50, step: float = 1e-5,
               seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative mismatch between ``-<rhs, e>`` and central differences of the energy.

    Each probe ``e`` is a unit perturbation of one component in one cell.  The
    difference quotient is formed cell by cell on the energy densities before
    summing, which keeps cancellation error at the level of a single cell.
    """
    rhs = flow_rhs(U, params, "penalized")
    rng = np.random.default_rng(seed)
    grid = U.grid
    M = U.M
    worst = 0.0
    for _ in range(n_probe):
        cell = tuple(int(rng.integers(n)) for n in grid.dims)
        comp = int(rng.integers(M + 1))
        plus, minus = U.copy(), U.copy()
        if comp == 0:
            plus.eta[cell] += step
            minus.eta[cell] -= step
            analytic = -rhs.d_eta[cell] * grid.cell_volume
        else:
            plus.u[cell + (comp - 1,)] += step
            minus.u[cell + (comp - 1,)] -= step
            analytic = -rhs.d_u[cell + (comp - 1,)] * grid.cell_volume
        dp = energy_density(plus, params)
        dm = energy_density(minus, params)
        diff = sum(np.sum(dp[k] - dm[k]) for k in dp) * grid.cell_volume
        numeric = diff / (2 * step)
        scale = max(abs(analytic), abs(numeric), floor)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst
