import math

import numpy as np
import pytest

from oracles import radial_prox_scan
from orientflow.flow import (CFLError, StepError, StepperConfig, Trajectory, continuation, dt_max,
                             dt_max_semi_implicit, effective_dt, evolve, stability_bound, step_explicit,
                             step_minimizing_movement, step_projected, step_semi_implicit)
from orientflow.grid import FieldPair, Grid, make_initial, norm_L2, random_smooth_pair
from orientflow.model import ModelParams, ParameterError, r_zero


@pytest.fixture
def smooth_unit(rng):
    U = random_smooth_pair(Grid((16, 16), 0.25), 4, rng, sweeps=3)
    U.u /= np.linalg.norm(U.u, axis=-1, keepdims=True)
    return U


@pytest.fixture
def small_bicrystal():
    p = ModelParams(kappa=1.0, T=0.1)
    return make_initial("bicrystal", Grid((16, 16), 1.0), p, width=2.0), p


class TestStepperConfig:
    def test_alias_and_mode(self):
        s = StepperConfig("projected-constrained")
        assert s.scheme == "projected" and s.mode == "constrained"
        assert StepperConfig("explicit").mode == "penalized"

    @pytest.mark.parametrize("kw", [dict(scheme="rk4"), dict(dt=0.0), dict(cfl_safety=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            StepperConfig(**kw)

    def test_minimizing_movement_step_limit(self):
        p = ModelParams(kappa=1.0)
        limit = 1 / r_zero(p)
        StepperConfig("minimizing-movement", dt=0.99 * limit).validate(p)
        with pytest.raises(ParameterError) as exc:
            StepperConfig("minimizing-movement", dt=limit).validate(p)
        assert exc.value.tag == "R0"

    def test_penalized_needs_regularization(self):
        with pytest.raises(ParameterError):
            StepperConfig("explicit").validate(ModelParams(kappa=1.0, delta=0.0))


class TestBounds:
    def test_flat_state_bound(self):
        # zero gradient: c = alpha / eps + kappa^2, explicit rates 2 sum 1/h^2 * c (+ 2 / delta)
        g = Grid((8, 8), 0.5)
        p = ModelParams(kappa=1.0, eps=0.1, delta=0.1)
        U = make_initial("constant", g, p)
        c = 1.1 / 0.1 + 1.0
        rate_u = 2 * (4 + 4) * c
        assert dt_max(U, p, "constrained") == pytest.approx(1 / rate_u)
        assert dt_max(U, p, "penalized") == pytest.approx(1 / (rate_u + 2 / 0.1))
        assert dt_max_semi_implicit(U, p) == pytest.approx(1 / (2 * 8 * (c - 1.0) + 2 / 0.1))

    def test_nu_stiffness_enters_with_factor_dimension(self, smooth_unit):
        from orientflow import kernels
        from orientflow.energy import flux_coefficient
        p = ModelParams(kappa=0.5, nu=0.8)
        gu2 = kernels.grad_sqnorm(smooth_unit.u, smooth_unit.grid.h)
        c = flux_coefficient(smooth_unit.eta, gu2, p) + 0.8 ** 3 * np.sqrt(gu2)
        rate_u = 2 * 2 * 16.0 * float(np.max(c))
        assert dt_max(smooth_unit, p, "constrained") == pytest.approx(1 / rate_u, rel=1e-12)

    def test_bicrystal_values(self):
        p = ModelParams(kappa=1.0)
        U = make_initial("bicrystal", Grid((64, 64), 1.0), p, width=2.0)
        assert dt_max(U, p, "penalized") == pytest.approx(0.0147, abs=1e-4)
        assert dt_max(U, p, "constrained") == pytest.approx(0.0208, abs=1e-4)
        assert dt_max_semi_implicit(U, p) == pytest.approx(0.0156, abs=1e-4)

    def test_stability_bound_by_scheme(self, small_bicrystal):
        U, p = small_bicrystal
        assert math.isnan(stability_bound(U, p, StepperConfig("minimizing-movement", dt=0.01)))
        assert stability_bound(U, p, StepperConfig("projected")) == dt_max(U, p, "constrained")

    def test_effective_dt(self):
        assert effective_dt(0.5, 0.02) == (25, 0.02)
        n, dt = effective_dt(0.5, 0.03)
        assert n == 17 and n * dt == pytest.approx(0.5, abs=1e-15)
        assert effective_dt(0.0, 0.1) == (0, 0.1)


class TestSteps:
    @pytest.mark.parametrize("norm", [0.4, 1.0, 1.3])
    def test_single_cell_proximal_step(self, norm):
        g = Grid((1, 1), 1.0)
        p = ModelParams(kappa=1.0, eps=0.1, delta=0.1)
        u = 0.5 * norm * np.ones(4)
        U = FieldPair(np.ones((1, 1)), u[None, None, :], g)
        dt = 0.02
        assert dt < min(1 / r_zero(p), p.delta)
        V = step_minimizing_movement(U, p, dt, tol=1e-10, maxiter=5000)
        assert np.max(np.abs(V.u[0, 0] - radial_prox_scan(u, p.delta, dt))) <= 1e-6

    def test_semi_implicit_agrees_with_explicit_to_first_order(self, smooth_unit):
        p = ModelParams(kappa=0.5, eps=0.1, delta=0.1)
        gaps = []
        for dt in (0.002, 0.001, 0.0005):
            A, B = smooth_unit.copy(), smooth_unit.copy()
            for _ in range(int(round(0.02 / dt))):
                A = step_explicit(A, p, dt)
                B = step_semi_implicit(B, p, dt)
            gaps.append(norm_L2(A - B, A.grid))
        assert 1.8 < gaps[0] / gaps[1] < 2.2 and 1.8 < gaps[1] / gaps[2] < 2.2

    def test_projected_drift_is_second_order(self, smooth_unit):
        p = ModelParams(kappa=0.5, eps=0.1)
        drifts = []
        for dt in (0.002, 0.001, 0.0005):
            info = {}
            V = step_projected(smooth_unit, p, dt, info=info)
            drifts.append(info["drift"])
            assert np.max(np.abs(np.linalg.norm(V.u, axis=-1) - 1)) <= 4e-16
        assert drifts[0] / drifts[1] > 3.5 and drifts[1] / drifts[2] > 3.5

    def test_cfl_violation(self, smooth_unit):
        p = ModelParams(kappa=0.5)
        with pytest.raises(CFLError):
            step_explicit(smooth_unit, p, 10 * dt_max(smooth_unit, p))
        with pytest.raises(CFLError):
            step_projected(smooth_unit, p, 10 * dt_max(smooth_unit, p, "constrained"))

    def test_projected_needs_unit_vectors(self, rng):
        U = random_smooth_pair(Grid((4, 4), 1.0), 4, rng, u_scale=0.8)
        with pytest.raises(StepError):
            step_projected(U, ModelParams(kappa=1.0), 1e-3)

    def test_zero_step_is_identity(self, smooth_unit):
        p = ModelParams(kappa=0.5)
        assert np.array_equal(step_projected(smooth_unit, p, 0.0).u, smooth_unit.u)


class TestEvolve:
    def test_zero_horizon(self, small_bicrystal):
        U, p = small_bicrystal
        traj = evolve(U, p, StepperConfig("semi-implicit"), T=0.0)
        assert len(traj) == 1 and traj.dissipation == [0.0]
        assert math.isnan(traj.metrics["wedge_residual"][0])

    @pytest.mark.parametrize("scheme,dt", [("explicit", 0.005), ("semi-implicit", 0.005),
                                           ("minimizing-movement", 0.02), ("projected", 0.01)])
    def test_energy_decreases(self, small_bicrystal, scheme, dt):
        U, p = small_bicrystal
        if scheme == "projected":
            p = p.with_(delta=0.0)
        traj = evolve(U, p, StepperConfig(scheme, dt=dt))
        totals = traj.totals()
        assert traj.steps[-1] == int(round(0.1 / traj.dt)) and traj.times[-1] == pytest.approx(0.1)
        assert np.all(np.diff(totals) <= 1e-10 * totals[0])
        assert sum(traj.dissipation) > 0

    def test_record_stride_and_snapshots(self, small_bicrystal):
        U, p = small_bicrystal
        traj = evolve(U, p, StepperConfig("semi-implicit", dt=0.01), record_stride=3, snapshot_stride=5)
        assert traj.steps == [0, 3, 6, 9, 10]
        assert [k for k, _ in traj.snapshots] == [0, 5, 10]

    def test_dissipation_accumulates_between_records(self, small_bicrystal):
        U, p = small_bicrystal
        s = StepperConfig("semi-implicit", dt=0.01)
        fine = evolve(U, p, s)
        coarse = evolve(U, p, s, record_stride=5)
        assert sum(coarse.dissipation) == pytest.approx(sum(fine.dissipation), rel=1e-12)

    def test_failure_carries_partial_trajectory(self, small_bicrystal):
        U, p = small_bicrystal
        with pytest.raises(StepError) as exc:
            evolve(U, p, StepperConfig("explicit", dt=0.09))
        err = exc.value
        assert err.step == 1 and err.trajectory is not None and len(err.trajectory) == 1

    def test_constrained_needs_unit_data(self, rng):
        U = random_smooth_pair(Grid((4, 4), 1.0), 4, rng, u_scale=0.8)
        with pytest.raises(ParameterError):
            evolve(U, ModelParams(kappa=1.0, delta=0.0, T=0.1), StepperConfig("projected"))

    def test_record_times_must_increase(self):
        traj = Trajectory(ModelParams(kappa=1.0), StepperConfig(), 0.01)
        from orientflow.energy import EnergyBreakdown
        e = EnergyBreakdown(0, 0, 0, 0, 0, 0)
        traj.record(0, 0.0, e, 0.0, {})
        with pytest.raises(ValueError):
            traj.record(1, 0.0, e, 0.0, {})


class TestContinuation:
    def test_small_cascade(self, small_bicrystal):
        U, p = small_bicrystal
        rep = continuation(U, p.with_(nu=0.1), {"delta": [0.1, 0.01], "nu": [0.1, 0.0]}, n_match=5)
        assert len(rep.levels) == 4 and all(lv.error is None for lv in rep.levels)
        d = rep.stage("delta")
        assert math.isnan(d[0].distance_prev) and d[1].distance_prev >= 0
        assert d[1].gl_residual < d[0].gl_residual <= d[0].gl_bound
        assert d[0].gl_residual <= d[0].gl_energy_bound == pytest.approx(2 * math.sqrt(0.1 * d[0].trajectory.totals()[0]))
        assert np.isfinite(rep.slopes["delta"])
        nu = rep.stage("nu")
        assert nu[1].nu_term == 0 and nu[0].nu_term > 0
        assert all(len(lv.matched) == 6 for lv in rep.levels)

    def test_failed_level_is_recorded(self, small_bicrystal):
        U, p = small_bicrystal
        rep = continuation(U, p, {"delta": [0.1]},
                           steppers={"delta": StepperConfig("minimizing-movement", dt=0.02, mm_maxiter=1)})
        assert rep.levels[0].error is not None and rep.levels[0].trajectory is None
