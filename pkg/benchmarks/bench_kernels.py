"""Compiled vs pure-Python solver kernels on the default 3x128 tanh field.

    python benchmarks/bench_kernels.py [--repeat 3] [--hidden 128,128,128]

Reports wall time per integration (forward, recording) and per reverse sweep,
plus the number of field evaluations so the per-evaluation cost is visible.
"""
import argparse
import time

import numpy as np

from mpinode import systems
from mpinode.solver import EVAL_SOLVER, TRAIN_SOLVER, get_core, integrate, integrate_recording
from mpinode.vfnet import MLPField, NetSpec, init_xavier


def bench(backend, field, ic, grid, cfg, repeat):
    best = {"forward": np.inf, "record": np.inf, "backward": np.inf}
    evals = 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = integrate(field, ic, grid, cfg, backend=backend)
        t1 = time.perf_counter()
        traj, tape = integrate_recording(field, ic, grid, cfg, backend=backend)
        t2 = time.perf_counter()
        tape.backward(np.ones_like(traj.states))
        t3 = time.perf_counter()
        best["forward"] = min(best["forward"], t1 - t0)
        best["record"] = min(best["record"], t2 - t1)
        best["backward"] = min(best["backward"], t3 - t2)
        evals = 6 * (traj.meta["accepted"] + traj.meta["rejected"]) + 1
    return best, evals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--hidden", default="128,128,128")
    ap.add_argument("--t-end", type=float, default=30.0)
    args = ap.parse_args()

    spec = NetSpec(hidden=tuple(int(h) for h in args.hidden.split(",")))
    field = MLPField(spec, init_xavier(spec, 0))
    grid = np.round(np.arange(0.0, args.t_end + 1e-9, 0.1), 10)
    ic = np.array([2.0, 1.0])
    backends = ["python"]
    try:
        get_core("compiled")
        backends.insert(0, "compiled")
    except ImportError:
        print("compiled kernel unavailable; benchmarking the fallback only")

    print(f"net {spec.layer_shapes}, {spec.n_params} params, grid {len(grid)} points")
    for label, cfg in (("train tol", TRAIN_SOLVER), ("eval tol", EVAL_SOLVER)):
        rows = {}
        for backend in backends:
            rows[backend] = bench(backend, field, ic, grid, cfg, args.repeat)
        for backend, (best, evals) in rows.items():
            per_eval = 1e6 * best["forward"] / evals
            print(f"{label:9s} {backend:8s} evals={evals:6d}  forward {best['forward']*1e3:9.2f} ms"
                  f"  record {best['record']*1e3:9.2f} ms  backward {best['backward']*1e3:9.2f} ms"
                  f"  ({per_eval:.2f} us/eval)")
        if len(rows) == 2:
            speedup = rows["python"][0]["forward"] / rows["compiled"][0]["forward"]
            print(f"{label:9s} speedup (forward): {speedup:.1f}x")

    lv = systems.SystemField(systems.lotka_volterra())
    for backend in backends:
        t0 = time.perf_counter()
        for _ in range(args.repeat):
            integrate(lv, [0.001, 0.001], grid, EVAL_SOLVER, backend=backend)
        dt = (time.perf_counter() - t0) / args.repeat
        print(f"LV truth  {backend:8s} {dt*1e3:9.2f} ms per edge-regime trajectory at 1e-8")


if __name__ == "__main__":
    main()
