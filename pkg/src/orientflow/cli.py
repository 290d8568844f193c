"""Command-line front end.

Commands::

    orientflow run --config FILE [--dry-run] [--seed N]
    orientflow continuation --config FILE [--dry-run] [--seed N]
    orientflow check DIR
    orientflow selftest [--suite NAME] [--seed N]

Exit codes: 0 ok, 2 config error, 3 runtime or step error, 4 check failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import config as cfgmod
from .diagnostics import DiagnosticsReport, report
from .energy import EnergyBreakdown
from .flow import StepError, Trajectory, continuation, effective_dt, evolve, stability_bound
from .grid import write_snapshot
from .model import ParameterError
from .suites import SUITES

log = logging.getLogger("orientflow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4
ENERGY_COLUMNS = ("step", "time") + EnergyBreakdown.columns() + ("diss_increment",)
METRIC_COLUMNS = ("sphere_residual", "max_norm_u", "min_u1", "eta_min", "eta_max", "gl_residual",
                  "mu_l1", "tv_flux_max", "wedge_residual")


def _fmt(x) -> str:
    return "%.17g" % x


class TrajectoryWriter:
    """Streams ``energy.csv`` and ``series.csv`` rows as states are recorded."""

    def __init__(self, outdir: Path):
        outdir.mkdir(parents=True, exist_ok=True)
        self.energy = open(outdir / "energy.csv", "w", newline="")
        self.series = open(outdir / "series.csv", "w", newline="")
        self.energy.write(",".join(ENERGY_COLUMNS) + "\n")
        self.series.write(",".join(("step", "time") + METRIC_COLUMNS) + "\n")
        self.snapdir = outdir / "snapshots"

    def __call__(self, traj: Trajectory, U) -> None:
        k, t = traj.steps[-1], traj.times[-1]
        row = [str(k), _fmt(t)] + [_fmt(v) for v in traj.energies[-1].as_row()] + [_fmt(traj.dissipation[-1])]
        self.energy.write(",".join(row) + "\n")
        self.series.write(",".join([str(k), _fmt(t)] + [_fmt(traj.metrics[c][-1]) for c in METRIC_COLUMNS])
                          + "\n")
        self.energy.flush()
        self.series.flush()

    def snapshot(self, step: int, U) -> None:
        self.snapdir.mkdir(exist_ok=True)
        write_snapshot(self.snapdir / f"snap_{step:07d}.bin", U)

    def close(self) -> None:
        self.energy.close()
        self.series.close()

    @classmethod
    def dump(cls, traj: Trajectory, outdir: Path) -> None:
        """Write a finished trajectory in the streaming format."""
        w = cls(outdir)
        try:
            for i in range(len(traj)):
                part = Trajectory(traj.params, traj.stepper, traj.dt, traj.steps[: i + 1],
                                  traj.times[: i + 1], traj.energies[: i + 1], traj.dissipation[: i + 1],
                                  {k: v[: i + 1] for k, v in traj.metrics.items()}, dt_bound=traj.dt_bound)
                w(part, None)
        finally:
            w.close()


def load_trajectory(outdir) -> tuple[cfgmod.RunConfig, Trajectory]:
    """Rebuild a trajectory from a run directory (``run.cfg``, ``energy.csv``, ``series.csv``)."""
    outdir = Path(outdir)
    cfg = cfgmod.load(outdir / "run.cfg")
    stepper = cfg.stepper
    _, dt = effective_dt(cfg["T"], stepper.dt)
    traj = Trajectory(cfg.run_params, stepper, dt,
                      dt_bound=stability_bound(cfg.initial_state(), cfg.run_params, stepper))
    with open(outdir / "energy.csv") as fe, open(outdir / "series.csv") as fs:
        e_head = fe.readline().strip().split(",")
        s_head = fs.readline().strip().split(",")
        if tuple(e_head) != ENERGY_COLUMNS or tuple(s_head[2:]) != METRIC_COLUMNS:
            raise ValueError(f"unexpected CSV columns in {outdir}")
        for el, sl in zip(fe, fs):
            ev, sv = el.strip().split(","), sl.strip().split(",")
            if ev[0] != sv[0]:
                raise ValueError(f"energy.csv and series.csv disagree at step {ev[0]}")
            energy = EnergyBreakdown.from_row(ev[2:2 + len(EnergyBreakdown.columns()) - 1])
            traj.record(int(ev[0]), float(ev[1]), energy, float(ev[-1]),
                        dict(zip(METRIC_COLUMNS, (float(x) for x in sv[2:]))))
    if not len(traj):
        raise ValueError(f"no recorded states in {outdir}")
    return cfg, traj


def _print_report(rep: DiagnosticsReport) -> None:
    for c in rep.checks:
        print(f"  {c.name:<18} {'pass' if c.passed else 'FAIL'}  value={c.value:.6g}  bound={c.bound:.6g}")


# -- commands -------------------------------------------------------------------------

def cmd_run(cfg: cfgmod.RunConfig, dry_run: bool = False) -> int:
    if dry_run:
        sys.stdout.write(cfg.resolved_text())
        return EXIT_OK
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run.cfg").write_text(cfg.resolved_text())
    params = cfg.run_params
    U0 = cfg.initial_state()
    writer = TrajectoryWriter(outdir)
    status = EXIT_OK
    try:
        traj = evolve(U0, params, cfg.stepper, cfg["T"], cfg["record_stride"], cfg["snapshot_stride"],
                      on_record=writer, on_snapshot=writer.snapshot)
    except StepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        traj, status = exc.trajectory, EXIT_RUNTIME
    finally:
        writer.close()
    if traj is None or not len(traj):
        return EXIT_RUNTIME
    rep = report(traj, params, cfg.thresholds)
    rep.write_csv(outdir / "report.csv")
    print(f"{len(traj)} records to t = {traj.times[-1]:.6g}; F: {traj.energies[0].total:.10g} -> "
          f"{traj.energies[-1].total:.10g}; output in {outdir}")
    _print_report(rep)
    if status == EXIT_OK and not rep.passed:
        status = EXIT_CHECK
    return status


CONTINUATION_COLUMNS = ("stage", "level", "value", "gl_residual", "gl_bound", "gl_energy_bound", "distance_prev",
                        "distance_prev_final", "final_energy", "nu_term", "weighted_tv", "grad_l1",
                        "grad_l1_diff", "slope", "error")


def cmd_continuation(cfg: cfgmod.RunConfig, dry_run: bool = False) -> int:
    if dry_run:
        sys.stdout.write(cfg.resolved_text())
        return EXIT_OK
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run.cfg").write_text(cfg.resolved_text())
    steppers = {s: cfg.stepper_for(cfg[f"{s}_scheme"]) for s in cfgmod.STAGES}
    rep = continuation(cfg.initial_state(), cfg.params, cfg.schedule, steppers, cfg["T"], cfg["match_points"])
    failed = False
    with open(outdir / "continuation.csv", "w", newline="") as fh:
        fh.write(",".join(CONTINUATION_COLUMNS) + "\n")
        counters: dict[str, int] = {}
        for lv in rep.levels:
            i = counters[lv.stage] = counters.get(lv.stage, -1) + 1
            slope = rep.slopes.get(lv.stage)
            row = [lv.stage, str(i), _fmt(lv.value)]
            row += [_fmt(getattr(lv, c)) for c in CONTINUATION_COLUMNS[3:13]]
            row += ["" if slope is None else _fmt(slope), (lv.error or "").replace(",", ";").replace("\n", " ")]
            fh.write(",".join(row) + "\n")
            if lv.error:
                failed = True
                print(f"{lv.stage} = {lv.value:g}: FAILED ({lv.error})", file=sys.stderr)
                continue
            TrajectoryWriter.dump(lv.trajectory, outdir / f"{lv.stage}_{i}")
            extra = (f" gl={lv.gl_residual:.4g} (bounds {lv.gl_bound:.4g}, {lv.gl_energy_bound:.4g})"
                     if lv.stage == "delta" else "")
            dist = "" if math.isnan(lv.distance_prev) else f" dist_prev={lv.distance_prev:.4g}"
            print(f"{lv.stage} = {lv.value:g}: F(T)={lv.final_energy:.8g}{extra}{dist}")
    for stage, slope in rep.slopes.items():
        print(f"{stage} slope: {slope:.4f}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_check(path) -> int:
    try:
        cfg, traj = load_trajectory(path)
    except cfgmod.ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: cannot read trajectory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rep = report(traj, cfg.run_params, cfg.thresholds)
    print(f"{path}: {len(traj)} records")
    _print_report(rep)
    stored = Path(path) / "report.csv"
    if stored.exists():
        old = DiagnosticsReport.read_csv(stored)
        new = [(c.name, c.value, c.bound, c.passed) for c in rep.checks]
        same = [(c.name, c.value, c.bound, c.passed) for c in old] == new
        if not same:
            print("  stored report.csv differs from the recomputed report")
            return EXIT_CHECK
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_selftest(suite: str | None = None, seed: int = 0) -> int:
    names = [suite] if suite else list(SUITES)
    ok = True
    for name in names:
        res = SUITES[name](seed=seed)
        status = "pass" if res.passed else "FAIL"
        print(f"{name}: {res.count} cases, {sum(g.n_failed for g in res.groups)} failed, "
              f"{res.seconds:.2f} s [{status}]")
        for g in res.groups:
            print(f"  {g.name:<26} {g.count:>6} cases  worst {g.worst:.3e}  tol {g.tol:.1e}")
            for f in g.failures:
                print(f"    {f.describe()}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_CHECK


# -- entry point ---------------------------------------------------------------------------

def _seed_arg(text: str) -> int:
    try:
        return cfgmod._seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orientflow", description="Orientation phase-field flows and checks.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "evolve one configuration"),
                           ("continuation", "run the delta, nu and eps regularization sweeps")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="config file")
        p.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
        p.add_argument("--seed", type=_seed_arg, help="override the config seed")
    p = sub.add_parser("check", help="re-run the diagnostics on a run directory")
    p.add_argument("directory")
    p = sub.add_parser("selftest", help="run the identity and gradient suites")
    p.add_argument("--suite", choices=sorted(SUITES))
    p.add_argument("--seed", type=_seed_arg, default=0)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return cmd_check(args.directory)
    if args.command == "selftest":
        return cmd_selftest(args.suite, args.seed)
    try:
        cfg = cfgmod.load(args.config, require_schedule=args.command == "continuation")
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except cfgmod.ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(cfg, args.dry_run)
        return cmd_continuation(cfg, args.dry_run)
    except (ParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
