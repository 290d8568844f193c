"""End-to-end acceptance criteria, one test per criterion.

Each test prints (and registers for the terminal summary) one line of the
form ``PASS criterion N: ...`` or ``FAIL criterion N: ...``.
"""
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from oracles import radial_prox_scan
from orientflow import cli, diagnostics as dg, suites
from orientflow.energy import flow_rhs
from orientflow.flow import StepperConfig, continuation, dt_max, evolve, step_minimizing_movement
from orientflow.grid import FieldPair, Grid, default_grains, make_initial
from orientflow.model import ModelParams, r_zero


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def bicrystal64(params, **kw):
    return make_initial("bicrystal", Grid((64, 64), 1.0), params, width=2.0, **kw)


def test_criterion_01_exterior_identities():
    res = suites.run_exterior(seed=0, n=10_000)
    per_group = min(g.count for g in res.groups)
    worst = max(g.worst for g in res.groups)
    ok = res.passed and per_group >= 10_000 and res.seconds < 10
    verdict(1, ok, f"{len(res.groups)} identities x >= {per_group} cases, worst {worst:.2e}, {res.seconds:.2f} s")


def test_criterion_02_rotations():
    res = suites.run_rotrep(seed=0, n=1000)
    amb = res.group("equator-ambiguity")
    ok = res.passed and amb.count > 0 and res.group("round-trip").count >= 1000 and res.seconds < 5
    verdict(2, ok, f"{res.count} cases, round-trip worst {res.group('round-trip').worst:.2e}, "
                   f"{amb.count} ambiguity cases, {res.seconds:.2f} s")


def test_criterion_03_gradient_consistency():
    res = suites.run_gradcheck(seed=0, n_states=20)
    g = res.group("grad-check")
    ok = res.passed and g.count == 20 and g.worst <= 1e-5 and res.seconds < 30
    verdict(3, ok, f"20 states, max relative error {g.worst:.2e}, {res.seconds:.2f} s")


def test_criterion_04_energy_inequality():
    p = ModelParams(kappa=1.0, eps=0.1, delta=0.1, T=0.5)
    U0 = bicrystal64(p)
    t0 = time.perf_counter()
    mm = evolve(U0, p, StepperConfig("minimizing-movement", dt=0.02))
    t_mm = time.perf_counter() - t0
    F0 = mm.totals()[0]
    n_steps = mm.steps[-1]
    violations = dg.check_energy_inequality(mm, n_steps * 1e-8 * (1 + F0))
    t0 = time.perf_counter()
    si = evolve(U0, p, StepperConfig("semi-implicit", dt=0.005))
    t_si = time.perf_counter() - t0
    rise = dg.energy_increase(si)
    ok = not violations and rise <= 1e-6 * F0 and max(t_mm, t_si) <= 300
    verdict(4, ok, f"minimizing movement {len(violations)} violations over {n_steps} steps ({t_mm:.1f} s); "
                   f"semi-implicit energy increase {rise:.2e} <= {1e-6 * F0:.2e} ({t_si:.1f} s)")


def test_criterion_05_ginzburg_landau_scaling():
    # a winding orientation field cannot be relaxed onto the sphere, which is
    # what makes the residual scale like sqrt(delta); smooth data give O(delta)
    p = ModelParams(kappa=32.0, eps=0.1, delta=0.1, T=0.5)
    U0 = make_initial("vortex", Grid((32, 32), 1.0), p)
    t0 = time.perf_counter()
    rep = continuation(U0, p, {"delta": [1e-1, 1e-2, 1e-3]})
    secs = time.perf_counter() - t0
    lv = rep.stage("delta")
    slope = rep.slopes.get("delta", math.nan)
    within = all(l.error is None and l.gl_residual <= 1.1 * l.gl_bound for l in lv)
    ok = 0.4 <= slope <= 0.6 and within and secs <= 600
    res = ", ".join(f"{l.gl_residual:.3e}/{1.1 * l.gl_bound:.3e}" for l in lv)
    verdict(5, ok, f"fitted exponent {slope:.3f}; residual/bound per level {res}; {secs:.1f} s")


def test_criterion_06_norm_bound():
    p = ModelParams(kappa=1.0, eps=0.1, delta=0.1, T=0.5)
    U0 = make_initial("random-cap", Grid((64, 64), 1.0), p, seed=11, r=0.5, sigma=0.6)
    assert np.max(np.abs(np.linalg.norm(U0.u, axis=-1) - 1)) <= 1e-14
    worst = {}
    for scheme, dt in (("semi-implicit", 0.005), ("minimizing-movement", 0.02), ("explicit", 0.005)):
        traj = evolve(U0, p, StepperConfig(scheme, dt=dt))
        worst[scheme] = max(traj.metrics["max_norm_u"])
    ok = all(v <= 1 + 1e-8 for v in worst.values())
    verdict(6, ok, "max |u| " + ", ".join(f"{k} {v:.15f}" for k, v in worst.items()))


def test_criterion_07_cap_maximum_principle():
    r = 0.7
    p = ModelParams(kappa=1.0, eps=0.1, nu=0.1, delta=0.0, T=0.5)
    ga, gb = default_grains(4, 2 * math.acos(r))
    assert ga[0] >= r - 1e-15 and gb[0] >= r - 1e-15
    U0 = bicrystal64(p, grain_a=ga, grain_b=gb)
    traj = evolve(U0, p, StepperConfig("projected", dt=0.01))
    lo = dg.check_cap(traj)
    ok = lo >= r - 1e-3
    verdict(7, ok, f"min u1 over time and cells {lo:.15f} >= {r - 1e-3}")


def test_criterion_08_nu_limit():
    p = ModelParams(kappa=1.0, eps=0.1, nu=0.3, delta=0.0, T=0.5)
    rep = continuation(bicrystal64(p), p, {"nu": [0.3, 0.1, 0.03, 0.0]})
    lv = rep.stage("nu")
    terms = [l.nu_term for l in lv]
    dists = [l.distance_prev_final for l in lv[1:]]
    ok = (all(l.error is None for l in lv) and all(a > b for a, b in zip(terms, terms[1:])) and terms[-1] == 0
          and all(a > b for a, b in zip(dists, dists[1:])))
    verdict(8, ok, "nu_term " + " > ".join(f"{t:.2e}" for t in terms)
            + "; distances at T " + " > ".join(f"{d:.2e}" for d in dists))


def test_criterion_09_constrained_structure():
    L = 32.0
    p = ModelParams(kappa=1.0, eps=0.1, nu=0.0, delta=0.0, T=1.0)
    dt = None
    wedge, tangency, sphere = [], 0.0, 0.0
    for n in (32, 64, 128):
        grid = Grid((n, n), L / n)
        U0 = make_initial("bicrystal", grid, p, width=4.0)
        if dt is None:
            dt = 0.2 * dt_max(U0, p, "constrained")
        else:
            dt *= 0.5
        rhs = flow_rhs(U0, p, "constrained")
        tangency = max(tangency, float(np.max(np.abs(np.sum(rhs.d_u * U0.u, axis=-1)))))
        # dt halves with h while the explicit bound shrinks like h^2; at 128^2 the step is
        # 0.8 of the bound, so the full bound is used rather than the default safety factor
        traj = evolve(U0, p, StepperConfig("projected", dt=dt, cfl_safety=1.0), T=4 * dt)
        sphere = max(sphere, max(traj.metrics["sphere_residual"]))
        wedge.append(float(np.nanmax(traj.metrics["wedge_residual"])))
    ratios = [a / b for a, b in zip(wedge, wedge[1:])]
    # unit vectors are represented to rounding: the post-normalization defect is a few ulps
    ok = tangency <= 1e-10 and sphere <= 1e-15 and all(q >= 1.5 for q in ratios)
    verdict(9, ok, f"tangency {tangency:.1e}, sphere residual {sphere:.1e}, wedge residual "
                   + " -> ".join(f"{w:.2e}" for w in wedge) + " (ratios " + ", ".join(f"{q:.2f}" for q in ratios) + ")")


def test_criterion_10_proximal_oracle():
    rng = np.random.default_rng(2024)
    p0 = ModelParams(kappa=1.0, eps=0.1)
    limit = 1.0 / r_zero(p0)
    grid = Grid((1, 1), 1.0)
    worst = 0.0
    for _ in range(50):
        delta = float(10 ** rng.uniform(-2, 0))
        dt = float(rng.uniform(0.05, 0.9) * min(limit, delta))
        u = rng.standard_normal(4)
        u *= rng.uniform(0.2, 2.0) / np.linalg.norm(u)
        p = p0.with_(delta=delta)
        U = FieldPair(np.ones((1, 1)), u[None, None, :], grid)
        V = step_minimizing_movement(U, p, dt, tol=1e-10, maxiter=10_000)
        worst = max(worst, float(np.max(np.abs(V.u[0, 0] - radial_prox_scan(u, delta, dt, samples=100_000)))))
    verdict(10, worst <= 1e-6, f"50 triples, max deviation from the scan {worst:.2e}")


def test_criterion_11_determinism(tmp_path):
    from pathlib import Path
    text = (Path(__file__).parent.parent / "configs" / "constrained_cap.cfg").read_text()
    outs = []
    for name in ("a", "b"):
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(text.replace("output = out/constrained_cap", f"output = {tmp_path / name}"))
        assert cli.main(["run", "--config", str(cfg), "--seed", "7"]) == 0
        outs.append((tmp_path / name / "energy.csv").read_bytes())
    verdict(11, outs[0] == outs[1], f"energy.csv byte-identical across two runs ({len(outs[0])} bytes)")
