"""Checks of the structural properties on computed trajectories.

Time norms are maxima over recorded states and space norms are cell
quadratures.  Every check reads only stored trajectory data (plus, for the
wedge form, two states), so re-running a report reproduces it exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .energy import flow_rhs, flux_coefficient, pointwise_multiplier
from .exterior import vector_wedge
from .grid import FieldPair, integrate
from .model import ModelParams


@dataclass(frozen=True)
class Thresholds:
    energy_tol: float = 1e-8
    # non-proximal schemes: extra slack factor * (dt / dt_bound) * total dissipation
    dissipation_dt_factor: float = 1.0
    eta_tol: float = 1e-8
    gl_slack: float = 0.1
    cap_r: float | None = None
    cap_tol: float = 1e-3
    sphere_tol: float = 1e-14
    norm_tol: float = 1e-8


# -- per-state quantities -------------------------------------------------------

def gl_residual(U: FieldPair) -> float:
    """``| |u|^2 - 1 |`` in the cell L2 norm."""
    s = np.sum(U.u * U.u, axis=-1) - 1.0
    return math.sqrt(integrate(s * s, U.grid))


def multiplier_density(U: FieldPair, params: ModelParams, mode: str) -> np.ndarray:
    """``Z : grad u`` (constrained) or the penalty multiplier ``(|u|^2 - 1)|u|^2 / delta``."""
    if mode == "constrained":
        return pointwise_multiplier(flow_rhs(U, params, "constrained"))
    sq = np.sum(U.u * U.u, axis=-1)
    return (sq - 1.0) * sq / params.delta


def tv_flux_max(U: FieldPair, params: ModelParams) -> float:
    """``max alpha(eta) |B|`` with ``B`` the derivative (or minimal selection) of ``f_eps``."""
    gu2 = kernels.grad_sqnorm(U.u, U.grid.h)
    n = np.sqrt(gu2)
    if params.eps > 0:
        b = n / np.sqrt(params.eps ** 2 + gu2)
    else:
        b = (n > 1e-14).astype(float)
    return float(np.max(np.abs(params.funcs.alpha(U.eta)) * b))


def state_metrics(U: FieldPair, params: ModelParams, mode: str) -> dict[str, float]:
    norms = np.linalg.norm(U.u, axis=-1)
    u1 = U.u[..., 0] / np.where(norms > 0, norms, 1.0)
    return {
        "sphere_residual": float(np.max(np.abs(norms - 1.0))),
        "max_norm_u": float(np.max(norms)),
        "min_u1": float(np.min(u1)),
        "eta_min": float(np.min(U.eta)),
        "eta_max": float(np.max(U.eta)),
        "gl_residual": gl_residual(U),
        "mu_l1": integrate(np.abs(multiplier_density(U, params, mode)), U.grid),
        "tv_flux_max": tv_flux_max(U, params),
    }


def wedge_residual(U_prev: FieldPair, U_next: FieldPair, dt: float, params: ModelParams) -> float:
    """L2 norm of ``du/dt ^ u - div Z ^ u`` with the time derivative a forward difference.

    The multiplier term is parallel to ``u`` and drops out of the wedge.
    """
    grid = U_prev.grid
    gu2 = kernels.grad_sqnorm(U_prev.u, grid.h)
    div_Z = kernels.div_coef_grad(U_prev.u, flux_coefficient(U_prev.eta, gu2, params), grid.h)
    w = vector_wedge((U_next.u - U_prev.u) / dt - div_Z, U_prev.u)
    return math.sqrt(integrate(np.sum(w * w, axis=-1), grid))


def check_wedge_form(U_prev: FieldPair, U_next: FieldPair, dt: float, params: ModelParams) -> float:
    return wedge_residual(U_prev, U_next, dt, params)


# -- trajectory checks ----------------------------------------------------------

def cumulative_dissipation(traj) -> np.ndarray:
    return np.cumsum(np.asarray(traj.dissipation, dtype=float))


def check_energy_inequality(traj, tol: float) -> list[tuple[int, float]]:
    """Recorded steps where ``F(U(s)) + dissipation up to s`` exceeds ``F(U0) + tol``.

    Returns ``(step, excess)`` pairs.
    """
    totals = traj.totals()
    lhs = totals + cumulative_dissipation(traj)
    excess = lhs - totals[0]
    return [(int(s), float(e)) for s, e in zip(traj.steps, excess) if e > tol]


def energy_excess(traj) -> float:
    """Largest ``F(U(s)) + dissipation up to s - F(U0)`` over recorded states."""
    totals = traj.totals()
    return float(np.max(totals + cumulative_dissipation(traj) - totals[0]))


def energy_increase(traj) -> float:
    """Sum of positive increments of the total energy between records."""
    d = np.diff(traj.totals())
    return float(np.sum(d[d > 0]))


def check_eta_bounds(traj) -> float:
    lo = np.asarray(traj.metrics["eta_min"])
    hi = np.asarray(traj.metrics["eta_max"])
    return float(max(0.0, float(np.max(-lo)), float(np.max(hi - 1.0))))


def check_gl_residual(traj, delta: float, F0: float) -> tuple[float, float]:
    return float(np.max(traj.metrics["gl_residual"])), math.sqrt(delta) * F0


def gl_energy_bound(delta: float, F0: float) -> float:
    return 2.0 * math.sqrt(delta * F0)


def check_cap(traj, r: float | None = None) -> float:
    return float(np.min(traj.metrics["min_u1"]))


# -- aggregate report -------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool


@dataclass
class DiagnosticsReport:
    energy_violations: list[tuple[int, float]] = field(default_factory=list)
    gl_residual_max: float = float("nan")
    sphere_residual_max: float = float("nan")
    cap_min_u1: float = float("nan")
    wedge_residual_max: float = float("nan")
    mu_L1_norm: float = float("nan")
    dissipation_total: float = float("nan")
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "value", "bound", "pass"])
            for c in self.checks:
                w.writerow([c.name, repr(float(c.value)), repr(float(c.bound)), int(c.passed)])

    @staticmethod
    def read_csv(path) -> list[Check]:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [Check(r["name"], float(r["value"]), float(r["bound"]), bool(int(r["pass"]))) for r in rows]


def report(traj, params: ModelParams, thresholds: Thresholds | None = None) -> DiagnosticsReport:
    """Run every applicable check on a trajectory.

    The energy-inequality tolerance is ``energy_tol (1 + F0)`` per step.  An
    explicit step of size ``dt`` on an energy whose Hessian is bounded by
    ``L ~ 2 / dt_bound`` overshoots the inequality by at most
    ``(L dt / 2) |dU|^2 / dt``, so for schemes other than minimizing
    movement the fraction ``dt / dt_bound`` of the dissipation is added to
    the tolerance.  Monotonicity of the energy itself is checked at the
    strict tolerance for every scheme.  The sphere check only applies to
    constrained runs, the ``|u| <= 1`` check to penalized runs and the GL
    check to penalized runs with ``delta > 0``.
    """
    th = thresholds or Thresholds()
    m = traj.metrics
    totals = traj.totals()
    F0 = float(totals[0])
    n_steps = max(traj.steps[-1], 1)
    rep = DiagnosticsReport()
    strict = n_steps * th.energy_tol * (1.0 + F0)
    rep.dissipation_total = float(np.sum(traj.dissipation))
    tol = strict
    if traj.stepper.scheme != "minimizing-movement":
        ratio = traj.dt / traj.dt_bound if traj.dt_bound > 0 else 1.0
        tol += th.dissipation_dt_factor * ratio * rep.dissipation_total
    rep.energy_violations = check_energy_inequality(traj, tol)
    rep.checks.append(Check("energy_inequality", energy_excess(traj), tol, not rep.energy_violations))
    rise = energy_increase(traj)
    rep.checks.append(Check("energy_monotone", rise, strict, rise <= strict))

    exc = check_eta_bounds(traj)
    eta0_ok = m["eta_min"][0] >= 0.0 and m["eta_max"][0] <= 1.0
    rep.checks.append(Check("eta_bounds", exc, th.eta_tol, (exc <= th.eta_tol) or not eta0_ok))

    rep.sphere_residual_max = float(np.max(m["sphere_residual"]))
    constrained = traj.mode == "constrained"
    if constrained:
        rep.checks.append(Check("sphere_residual", rep.sphere_residual_max, th.sphere_tol,
                                rep.sphere_residual_max <= th.sphere_tol))
    else:
        mx = float(np.max(m["max_norm_u"]))
        if m["max_norm_u"][0] <= 1.0 + th.norm_tol:
            rep.checks.append(Check("max_norm_u", mx, 1.0 + th.norm_tol, mx <= 1.0 + th.norm_tol))
        if params.delta > 0:
            res, bound = check_gl_residual(traj, params.delta, F0)
            rep.gl_residual_max = res
            rep.checks.append(Check("gl_residual", res, bound * (1 + th.gl_slack),
                                    res <= bound * (1 + th.gl_slack)))
            # termwise from the penalty: || |u|^2 - 1 ||^2 = 4 delta int Pi <= 4 delta F0
            e_bound = gl_energy_bound(params.delta, F0)
            rep.checks.append(Check("gl_energy_bound", res, e_bound, res <= e_bound * (1 + 1e-12)))

    rep.cap_min_u1 = check_cap(traj)
    if th.cap_r is not None:
        rep.checks.append(Check("cap_min_u1", rep.cap_min_u1, th.cap_r - th.cap_tol,
                                rep.cap_min_u1 >= th.cap_r - th.cap_tol))

    wedge = np.asarray(m.get("wedge_residual", []), dtype=float)
    rep.wedge_residual_max = float(np.nanmax(wedge)) if np.any(np.isfinite(wedge)) else 0.0
    rep.checks.append(Check("wedge_residual", rep.wedge_residual_max, math.inf, True))

    mu = np.asarray(m["mu_l1"])
    rep.mu_L1_norm = float(np.max(mu))
    rep.checks.append(Check("mu_L1", rep.mu_L1_norm, math.inf, bool(np.all(np.isfinite(mu)))))

    a_bound = params.funcs.alpha_max_unit
    tvf = float(np.max(m["tv_flux_max"]))
    in_unit = float(np.min(m["eta_min"])) >= -th.eta_tol and float(np.max(m["eta_max"])) <= 1 + th.eta_tol
    rep.checks.append(Check("tv_flux_bound", tvf, a_bound, tvf <= a_bound * (1 + 1e-12) or not in_unit))
    return rep
