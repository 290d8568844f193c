"""Compare the compiled and numpy stencil kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 20]

Prints the median time per call for each kernel and backend, the speedup,
and the largest difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from orientflow import kernels
from orientflow.flow import StepperConfig, evolve
from orientflow.grid import Grid, make_initial
from orientflow.model import ModelParams


def _time(fn, repeat):
    fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_kernels(n: int, M: int, repeat: int, rng) -> None:
    h = (1.0, 1.0)
    u = rng.standard_normal((n, n, M))
    c = rng.uniform(0.5, 2.0, (n, n))
    F = rng.standard_normal((n, n, M, 2))
    cases = {
        "grad": lambda: kernels.grad(u, h),
        "div": lambda: kernels.div(F, h),
        "div_coef_grad": lambda: kernels.div_coef_grad(u, c, h),
        "grad_sqnorm": lambda: kernels.grad_sqnorm(u, h),
    }
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in kernels.available_backends():
            with kernels.using(b):
                times[b] = _time(fn, repeat)
                outs[b] = fn()
        line = f"{n:>5} {name:<14} python {times['python'] * 1e3:9.3f} ms"
        if "cython" in times:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            line += (f"  cython {times['cython'] * 1e3:9.3f} ms  speedup {times['python'] / times['cython']:6.2f}x"
                     f"  max diff {diff:.1e}")
        print(line)


def bench_run(n: int, steps: int) -> None:
    grid = Grid((n, n), (1.0, 1.0))
    params = ModelParams(kappa=1.0)
    U0 = make_initial("bicrystal", grid, params)
    stepper = StepperConfig("semi-implicit", 0.005)
    T = steps * stepper.dt
    for b in kernels.available_backends():
        with kernels.using(b):
            t0 = time.perf_counter()
            traj = evolve(U0, params, stepper, T)
            dt = time.perf_counter() - t0
        print(f"{n:>5} semi-implicit {steps} steps  {b:<7} {dt:8.3f} s  F(T) = {traj.energies[-1].total:.12g}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=50)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(kernels.available_backends())}")
    for n in args.sizes:
        bench_kernels(n, 4, args.repeat, rng)
    for n in args.sizes[:2]:
        bench_run(n, args.steps)


if __name__ == "__main__":
    main()
