"""Time integration of the penalized and sphere-constrained flows.

Schemes
-------
explicit
    Forward Euler on the penalized flow.
semi-implicit
    ``Lap eta`` and ``kappa^2 Lap u`` implicit (CG solves), everything else explicit.
minimizing-movement
    Implicit Euler written as ``U+ = argmin F(V) + |V - U|^2 / (2 dt)``,
    solved by gradient descent with a halving line search that only accepts
    iterates that decrease the proximal objective (up to its rounding).
projected
    Explicit step of the constrained flow followed by renormalization.

Explicit steps are guarded by :func:`dt_max`.  Under that bound an explicit
orientation update is a convex combination of neighbouring values plus a
radial correction, so ``|u| <= 1`` (penalized) and the cap ``u[0] >= r``
(projected) are preserved exactly by the discrete scheme.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .diagnostics import gl_energy_bound, state_metrics, wedge_residual
from .energy import (EnergyBreakdown, EnergyError, energy_density, energy_total,
                     flow_rhs, flux_coefficient, SPHERE_TOL)
from .grid import FieldPair, SolverError, integrate, norm_L2, solve_shifted_laplacian
from .model import ModelParams, ParameterError, r_zero, varpi_delta

log = logging.getLogger(__name__)

SCHEMES = ("explicit", "semi-implicit", "minimizing-movement", "projected")


class StepError(RuntimeError):
    """A time step failed; carries the step index, the time and the partial trajectory."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None,
                 trajectory: "Trajectory | None" = None):
        where = "" if step is None else f" at step {step} (t = {time:.6g})"
        super().__init__(f"{message}{where}")
        self.step = step
        self.time = time
        self.trajectory = trajectory


class CFLError(StepError):
    pass


class BlowUpError(StepError):
    pass


class StagnationError(StepError):
    def __init__(self, message: str, residual: float, **kw):
        super().__init__(message, **kw)
        self.residual = residual


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "semi-implicit"
    dt: float = 0.005
    cfl_safety: float = 0.5
    cg_tol: float = 1e-12
    cg_maxiter: int = 2000
    mm_maxiter: int = 500
    mm_tol: float | None = None  # default 1e-8 (1 + F(U0))

    def __post_init__(self):
        if self.scheme == "projected-constrained":
            object.__setattr__(self, "scheme", "projected")
        if self.scheme not in SCHEMES:
            raise ParameterError("stepper", f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ParameterError("stepper", f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_safety <= 1:
            raise ParameterError("stepper", f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")

    @property
    def mode(self) -> str:
        return "constrained" if self.scheme == "projected" else "penalized"

    def validate(self, params: ModelParams) -> None:
        if self.mode == "penalized" and not (params.delta > 0 and params.eps > 0):
            raise ParameterError("A5", f"scheme {self.scheme} needs delta > 0 and eps > 0")
        if self.scheme == "minimizing-movement":
            limit = 1.0 / r_zero(params)
            if not self.dt < limit:
                raise ParameterError("R0", f"minimizing-movement needs dt < 1/R0 = {limit:.6g}, got {self.dt}")


@dataclass
class Trajectory:
    """Energies, dissipation and per-record state metrics of one run.

    ``dissipation[k]`` is the sum of ``|U_{j+1} - U_j|^2 / dt`` over the steps
    between record ``k - 1`` and record ``k`` (zero for the first record).
    """

    params: ModelParams
    stepper: StepperConfig
    dt: float
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    energies: list[EnergyBreakdown] = field(default_factory=list)
    dissipation: list[float] = field(default_factory=list)
    metrics: dict[str, list[float]] = field(default_factory=dict)
    snapshots: list[tuple[int, FieldPair]] = field(default_factory=list)
    final: FieldPair | None = None
    # stability step of the explicit part at U0 (nan for minimizing movement)
    dt_bound: float = float("nan")

    @property
    def mode(self) -> str:
        return self.stepper.mode

    def totals(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])

    def record(self, step: int, t: float, energy: EnergyBreakdown, diss: float, metrics: dict) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("recorded times must increase")
        self.steps.append(step)
        self.times.append(t)
        self.energies.append(energy)
        self.dissipation.append(diss)
        for k, v in metrics.items():
            self.metrics.setdefault(k, []).append(float(v))

    def __len__(self) -> int:
        return len(self.times)


# -- stability bounds ---------------------------------------------------------

def _stiffness(eta: np.ndarray, gu2: np.ndarray, params: ModelParams) -> np.ndarray:
    """Flux coefficient with the nu part scaled by ``N``, the largest eigenvalue of its Hessian."""
    c = flux_coefficient(eta, gu2, params)
    if params.nu > 0:
        c = c + (params.dimN - 1) * params.nu ** params.nu_exponent * np.sqrt(gu2) ** (params.dimN - 1)
    return c


def dt_max(U: FieldPair, params: ModelParams, mode: str = "penalized") -> float:
    """Largest explicit step keeping both updates monotone (convex-combination form)."""
    grid = U.grid
    gu2 = kernels.grad_sqnorm(U.u, grid.h)
    c = _stiffness(U.eta, gu2, params)
    stencil = 2.0 * sum(1.0 / hx ** 2 for hx in grid.h)
    rate_u = stencil * float(np.max(c))
    if mode == "penalized":
        rate_u += 2.0 / params.delta
    funcs = params.funcs
    f_max = float(np.sqrt(params.eps ** 2 + np.max(gu2)))
    rate_eta = stencil + funcs.g_lipschitz + funcs.alpha_pp_max * f_max
    return 1.0 / max(rate_u, rate_eta)


def dt_max_semi_implicit(U: FieldPair, params: ModelParams) -> float:
    """Step bound for the explicit part of the semi-implicit scheme."""
    grid = U.grid
    gu2 = kernels.grad_sqnorm(U.u, grid.h)
    c = _stiffness(U.eta, gu2, params) - params.kappa ** 2
    stencil = 2.0 * sum(1.0 / hx ** 2 for hx in grid.h)
    funcs = params.funcs
    f_max = float(np.sqrt(params.eps ** 2 + np.max(gu2)))
    rate = max(stencil * float(np.max(c)) + 2.0 / params.delta,
               funcs.g_lipschitz + funcs.alpha_pp_max * f_max)
    return 1.0 / rate


def stability_bound(U: FieldPair, params: ModelParams, stepper: StepperConfig) -> float:
    """Step bound of the explicit part of ``stepper`` at ``U`` (nan for minimizing movement)."""
    if stepper.scheme == "semi-implicit":
        return dt_max_semi_implicit(U, params)
    if stepper.scheme in ("explicit", "projected"):
        return dt_max(U, params, stepper.mode)
    return float("nan")


def _check_finite(U: FieldPair, scheme: str) -> FieldPair:
    if not U.is_finite():
        raise BlowUpError(f"{scheme} step produced non-finite values")
    return U


# -- steppers -----------------------------------------------------------------

def step_explicit(U: FieldPair, params: ModelParams, dt: float, safety: float = 1.0,
                  info: dict | None = None) -> FieldPair:
    if dt == 0:
        return U.copy()
    limit = safety * dt_max(U, params, "penalized")
    if dt > limit:
        raise CFLError(f"dt = {dt:.6g} exceeds the explicit bound {limit:.6g}")
    rhs = flow_rhs(U, params, "penalized")
    return _check_finite(FieldPair(U.eta + dt * rhs.d_eta, U.u + dt * rhs.d_u, U.grid), "explicit")


def step_semi_implicit(U: FieldPair, params: ModelParams, dt: float, cg_tol: float = 1e-12,
                       cg_maxiter: int = 2000, info: dict | None = None) -> FieldPair:
    funcs = params.funcs
    funcs.check_range(U.eta)
    grid = U.grid
    gu2 = kernels.grad_sqnorm(U.u, grid.h)
    c_nl = flux_coefficient(U.eta, gu2, params) - params.kappa ** 2
    fe = np.sqrt(params.eps ** 2 + gu2)
    b_eta = U.eta + dt * (-funcs.g(U.eta) - funcs.alpha_prime(U.eta) * fe)
    b_u = U.u + dt * (kernels.div_coef_grad(U.u, c_nl, grid.h) - varpi_delta(U.u, params.delta))
    try:
        eta, it_e = solve_shifted_laplacian(b_eta, dt, grid, cg_tol, cg_maxiter)
        u, it_u = solve_shifted_laplacian(b_u, dt * params.kappa ** 2, grid, cg_tol, cg_maxiter)
    except SolverError as exc:
        raise StepError(f"semi-implicit linear solve failed: {exc}") from exc
    if info is not None:
        info["cg_iterations"] = (it_e, it_u)
    return _check_finite(FieldPair(eta, u, grid), "semi-implicit")


def _density_diff(a: dict, b: dict, vol: float) -> float:
    """``sum(a) - sum(b)`` formed cell by cell."""
    return float(sum(np.sum(a[k] - b[k]) for k in a)) * vol


def _density_scale(a: dict, vol: float) -> float:
    return float(sum(np.sum(np.abs(v)) for v in a.values())) * vol


def step_minimizing_movement(U_prev: FieldPair, params: ModelParams, dt: float, tol: float,
                             maxiter: int = 500, info: dict | None = None) -> FieldPair:
    """Approximate minimizer of ``J(V) = F(V) + |V - U_prev|^2 / (2 dt)``.

    Every accepted iterate lowers ``J`` (up to rounding of ``J`` itself), so the
    result satisfies ``F(U+) + |U+ - U_prev|^2 / (2 dt) <= F(U_prev)`` whatever
    the iteration count.  Step lengths start from the Barzilai-Borwein guess
    and are halved until ``J`` decreases; once ``J`` cannot resolve the step,
    a trial that changes ``J`` only at rounding level is taken if it lowers
    the residual.
    """
    grid = U_prev.grid
    vol = grid.cell_volume
    V = U_prev.copy()
    dens = energy_density(V, params)
    dist2 = 0.0
    G = (V - U_prev) * (1.0 / dt) - flow_rhs(V, params, "penalized").as_pair(grid)
    gnorm = norm_L2(G, grid)
    tau = 1.0 / (1.0 / dt + 1.0 / dt_max(U_prev, params, "penalized"))
    s_prev = y_prev = None
    round_tol = 64 * np.finfo(float).eps
    it = 0
    while gnorm > tol and it < maxiter:
        it += 1
        if s_prev is not None:
            sy = float(np.sum(s_prev.eta * y_prev.eta) + np.sum(s_prev.u * y_prev.u))
            ss = float(np.sum(s_prev.eta ** 2) + np.sum(s_prev.u ** 2))
            if sy > 0:
                tau = ss / sy
        accepted = False
        for _ in range(60):
            W = V.axpy(-tau, G)
            try:
                dens_w = energy_density(W, params)
            except (EnergyError, ParameterError):
                tau *= 0.5
                continue
            D = W - U_prev
            dist2_w = (float(np.sum(D.eta * D.eta)) + float(np.sum(D.u * D.u))) * vol
            dJ = _density_diff(dens_w, dens, vol) + (dist2_w - dist2) / (2 * dt)
            if dJ < 0:
                accepted = True
                break
            if dJ <= round_tol * _density_scale(dens, vol):
                # J no longer resolves the step: accept if the residual still drops
                G_try = (W - U_prev) * (1.0 / dt) - flow_rhs(W, params, "penalized").as_pair(grid)
                if norm_L2(G_try, grid) < gnorm:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            break
        G_new = (W - U_prev) * (1.0 / dt) - flow_rhs(W, params, "penalized").as_pair(grid)
        s_prev, y_prev = W - V, G_new - G
        V, dens, dist2, G = W, dens_w, dist2_w, G_new
        gnorm = norm_L2(G, grid)
    if info is not None:
        info["inner_iterations"] = it
        info["inner_residual"] = gnorm
    if gnorm > tol:
        raise StagnationError(
            f"minimizing-movement descent stalled at |grad J| = {gnorm:.3e} > tol = {tol:.3e} "
            f"after {it} iterations", residual=gnorm)
    return V


def step_projected(U: FieldPair, params: ModelParams, dt: float, safety: float = 1.0,
                   info: dict | None = None) -> FieldPair:
    defect = float(np.max(np.abs(np.linalg.norm(U.u, axis=-1) - 1.0)))
    if defect > SPHERE_TOL:
        raise StepError(f"projected step needs |u| = 1 per cell (defect {defect:.3e})")
    if dt == 0:
        return U.copy()
    limit = safety * dt_max(U, params, "constrained")
    if dt > limit:
        raise CFLError(f"dt = {dt:.6g} exceeds the explicit bound {limit:.6g}")
    rhs = flow_rhs(U, params, "constrained")
    w = U.u + dt * rhs.d_u
    n = np.linalg.norm(w, axis=-1, keepdims=True)
    drift = float(np.max(np.abs(n - 1.0)))
    if info is not None:
        info["drift"] = drift
    if drift > 0.5 or not np.all(np.isfinite(w)):
        raise BlowUpError(f"pre-normalization drift {drift:.3e} too large")
    return _check_finite(FieldPair(U.eta + dt * rhs.d_eta, w / n, U.grid), "projected")


def take_step(U: FieldPair, params: ModelParams, stepper: StepperConfig, dt: float,
              mm_tol: float, info: dict | None = None) -> FieldPair:
    s = stepper.scheme
    if s == "explicit":
        return step_explicit(U, params, dt, stepper.cfl_safety, info)
    if s == "semi-implicit":
        return step_semi_implicit(U, params, dt, stepper.cg_tol, stepper.cg_maxiter, info)
    if s == "minimizing-movement":
        return step_minimizing_movement(U, params, dt, mm_tol, stepper.mm_maxiter, info)
    return step_projected(U, params, dt, stepper.cfl_safety, info)


# -- driver -------------------------------------------------------------------

def _energy(U: FieldPair, params: ModelParams, mode: str) -> EnergyBreakdown:
    if mode == "constrained":
        return energy_total(U, params.with_(delta=0.0))
    return energy_total(U, params)


def effective_dt(T: float, dt: float) -> tuple[int, float]:
    """Step count and the step ``T / ceil(T / dt) <= dt`` that lands exactly on ``T``."""
    if T <= 0:
        return 0, dt
    n = int(math.ceil(T / dt - 1e-9))
    return n, T / n


def evolve(U0: FieldPair, params: ModelParams, stepper: StepperConfig, T: float | None = None,
           record_stride: int = 1, snapshot_stride: int = 0, on_record=None,
           on_snapshot=None) -> Trajectory:
    """March with a fixed step to ``T``.

    ``dt`` is reduced to ``T / ceil(T / dt)`` so the last step lands on ``T``.
    States are recorded every ``record_stride`` steps and at ``T``;
    ``on_record(traj, U)`` runs after each record.  Every ``snapshot_stride``
    steps the state goes to ``on_snapshot(step, U)``, or is kept in
    ``traj.snapshots`` without a callback.  A failing step raises
    :class:`StepError` with the trajectory recorded so far.
    """
    T = params.T if T is None else T
    if record_stride < 1 or snapshot_stride < 0:
        raise ParameterError("stepper", "record_stride must be >= 1 and snapshot_stride >= 0")
    stepper.validate(params)
    mode = stepper.mode
    if mode == "constrained":
        defect = float(np.max(np.abs(np.linalg.norm(U0.u, axis=-1) - 1.0)))
        if defect > SPHERE_TOL:
            raise ParameterError("A6", f"constrained flows need |u0| = 1 (defect {defect:.3e})")
    n_steps, dt = effective_dt(T, stepper.dt)
    traj = Trajectory(params, stepper, dt, dt_bound=stability_bound(U0, params, stepper))
    e0 = _energy(U0, params, mode)
    mm_tol = stepper.mm_tol if stepper.mm_tol is not None else 1e-8 * (1.0 + e0.total)

    def snapshot(k, V):
        if on_snapshot:
            on_snapshot(k, V)
        else:
            traj.snapshots.append((k, V.copy()))

    U = U0.copy()
    traj.record(0, 0.0, e0, 0.0, {**state_metrics(U, params, mode), "wedge_residual": math.nan})
    if snapshot_stride:
        snapshot(0, U)
    if on_record:
        on_record(traj, U)
    diss = 0.0
    for k in range(1, n_steps + 1):
        t = k * dt
        try:
            U_next = take_step(U, params, stepper, dt, mm_tol)
            energy = None
            if k % record_stride == 0 or k == n_steps:
                energy = _energy(U_next, params, mode)
        except StepError as exc:
            exc.step, exc.time, exc.trajectory = k, t, traj
            exc.args = (f"{exc.args[0]} at step {k} (t = {t:.6g})",)
            traj.final = U
            raise
        except (EnergyError, ParameterError, SolverError) as exc:
            traj.final = U
            raise StepError(str(exc), k, t, traj) from exc
        diff = U_next - U
        diss += norm_L2(diff, U.grid) ** 2 / dt
        if energy is not None:
            m = state_metrics(U_next, params, mode)
            m["wedge_residual"] = wedge_residual(U, U_next, dt, params)
            traj.record(k, t, energy, diss, m)
            diss = 0.0
            if on_record:
                on_record(traj, U_next)
        if snapshot_stride and k % snapshot_stride == 0:
            snapshot(k, U_next)
        U = U_next
    traj.final = U
    return traj


# -- continuation over delta -> 0, nu -> 0, eps -> 0 ----------------------------

@dataclass
class Level:
    stage: str
    value: float
    params: ModelParams | None = None
    dt: float = 0.0
    trajectory: Trajectory | None = None
    matched: list[FieldPair] = field(default_factory=list)
    gl_residual: float = float("nan")
    gl_bound: float = float("nan")
    gl_energy_bound: float = float("nan")
    distance_prev: float = float("nan")
    distance_prev_final: float = float("nan")
    final_energy: float = float("nan")
    weighted_tv: float = float("nan")
    nu_term: float = float("nan")
    grad_l1: float = float("nan")
    grad_l1_diff: float = float("nan")
    error: str | None = None


@dataclass
class ContinuationReport:
    levels: list[Level]
    slopes: dict[str, float]
    F0: dict[str, float]

    def stage(self, name: str) -> list[Level]:
        return [lv for lv in self.levels if lv.stage == name]


def _pair_distance(a: FieldPair, b: FieldPair) -> float:
    return norm_L2(a - b, a.grid)


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def continuation(U0: FieldPair, params: ModelParams, schedule: dict[str, list[float]],
                 steppers: dict[str, StepperConfig] | None = None, T: float | None = None,
                 n_match: int = 10) -> ContinuationReport:
    """Run each stage of the regularization cascade from the same initial data.

    ``schedule`` maps ``"delta"``, ``"nu"``, ``"eps"`` to decreasing parameter
    lists; stages run in that order.  The delta stage uses the penalized flow
    at the base ``nu`` and ``eps``; the nu stage the constrained flow at the
    base ``eps``; the eps stage the constrained flow with ``nu = 0``.  Every
    level records ``n_match`` equally spaced states so consecutive levels can
    be compared at the same times.
    """
    T = params.T if T is None else T
    defaults = {
        "delta": StepperConfig("semi-implicit", dt=0.005),
        "nu": StepperConfig("projected", dt=0.01),
        "eps": StepperConfig("projected", dt=0.01),
    }
    steppers = {**defaults, **(steppers or {})}
    levels: list[Level] = []
    F0: dict[str, float] = {}
    for stage in ("delta", "nu", "eps"):
        values = schedule.get(stage) or []
        prev: Level | None = None
        for value in values:
            if stage == "delta":
                p = params.with_(delta=value)
            elif stage == "nu":
                p = params.with_(nu=value, delta=0.0)
            else:
                p = params.with_(eps=value, nu=0.0, delta=0.0)
            lv = Level(stage, value, p)
            levels.append(lv)
            try:
                lv.dt = _level_dt(U0, p, steppers[stage], T, n_match)
                stepper = StepperConfig(**{**steppers[stage].__dict__, "dt": lv.dt})
                stride = int(round(T / lv.dt)) // n_match
                matched: list[FieldPair] = []

                def keep(tr, U, _stride=stride, _m=matched):
                    if tr.steps[-1] % _stride == 0:
                        _m.append(U.copy())

                traj = evolve(U0, p, stepper, T, record_stride=1, on_record=keep)
            except (StepError, ParameterError, EnergyError) as exc:
                lv.error = str(exc)
                log.warning("continuation level %s=%g failed: %s", stage, value, exc)
                continue
            lv.trajectory, lv.matched = traj, matched
            e0 = traj.energies[0].total
            F0[f"{stage}={value:g}"] = e0
            lv.final_energy = traj.energies[-1].total
            lv.weighted_tv = traj.energies[-1].weighted_tv
            lv.nu_term = traj.energies[-1].nu_term
            lv.grad_l1 = integrate(np.sqrt(kernels.grad_sqnorm(traj.final.u, U0.grid.h)), U0.grid)
            if stage == "delta":
                lv.gl_residual = max(traj.metrics["gl_residual"])
                lv.gl_bound = math.sqrt(value) * e0
                lv.gl_energy_bound = gl_energy_bound(value, e0)
            if prev is not None:
                dists = [_pair_distance(a, b) for a, b in zip(lv.matched, prev.matched)]
                lv.distance_prev = max(dists)
                lv.distance_prev_final = dists[-1]
                lv.grad_l1_diff = abs(lv.grad_l1 - prev.grad_l1)
            prev = lv
    slopes = {}
    dl = [lv for lv in levels if lv.stage == "delta" and lv.error is None]
    if len(dl) >= 2:
        slopes["delta"] = _fit_slope([lv.value for lv in dl], [lv.gl_residual for lv in dl])
    return ContinuationReport(levels, slopes, F0)


def _level_dt(U0: FieldPair, p: ModelParams, stepper: StepperConfig, T: float, n_match: int) -> float:
    """Step size for one level: the configured dt, capped by the scheme's bound, dividing T evenly."""
    dt = stepper.dt
    if stepper.scheme == "minimizing-movement":
        dt = min(dt, 0.9 / r_zero(p))
    else:
        dt = min(dt, stepper.cfl_safety * stability_bound(U0, p, stepper))
    per_block = int(math.ceil(T / (n_match * dt) - 1e-9))
    return T / (n_match * per_block)
