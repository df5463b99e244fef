"""
Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--scenario-seconds 5]

Times the three hot kernels in isolation and one short closed-loop scenario
per backend, and reports the speed-up of the compiled core.
"""
import argparse
import sys
import timeit

import numpy as np

from hydrovrb import config, engine, kernels
from hydrovrb import vehicle as vh


def kernel_cases(backend):
    P = vh.QuadParams()
    A = vh.allocation_matrix(P)
    kparams = np.array([P.mass, P.g, *P.inertia, P.max_rotor_speed])
    gains = vh.PIDGains().as_array()
    ainv = np.linalg.inv(A).reshape(-1).copy()
    amat = A.reshape(-1).copy()
    x0 = np.concatenate([[0, 0, 5, 0.2, 0, 0], vh.quaternion_from_euler(0.05, -0.02, 0.3), [0.1, 0, 0]])
    u = np.array([0.5, -0.2, 9.9])
    att = np.array([0.05, 0.02, 0.3])
    out8 = np.zeros(8)
    out3 = np.zeros(3)
    out13 = np.zeros(13)

    def advance():
        backend.quad_advance(x0.copy(), np.zeros(13), u, att, kparams, gains, ainv, amat, 1e-3, 10, out8)

    def derivative():
        backend.quad_derivative(x0, 9.0, att, kparams[:5], out13)

    p, v, c, vo = np.array([3.0, 1.0, 0.2]), np.array([0.0, 1.0, 0.0]), np.zeros(3), np.array([0.3, 0.0, 0.0])

    def doublet():
        backend.doublet_induced(p, v, c, vo, 2.0, out3)

    return {"quad_advance (10 substeps)": advance, "quad_derivative": derivative, "doublet_induced": doublet}


def best_of(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=2000)
    ap.add_argument("--scenario", default="delta8_avoidance.json")
    ap.add_argument("--scenario-seconds", type=float, default=5.0)
    args = ap.parse_args(argv)

    names = ["python"]
    try:
        kernels.get_backend("compiled")
        names.append("compiled")
    except ImportError:
        print("compiled extension not built; timing the Python kernels only", file=sys.stderr)

    rows = {}
    for name in names:
        for label, fn in kernel_cases(kernels.get_backend(name)).items():
            rows.setdefault(label, {})[name] = best_of(fn, args.number, args.repeat)

    cfg = config.load(args.scenario, [("timing.duration", args.scenario_seconds)])
    for name in names:
        res = engine.Simulation(cfg, kernels.get_backend(name)).run()
        rows.setdefault(f"{args.scenario} ({args.scenario_seconds:g} s sim)", {})[name] = res.wall_time

    width = max(map(len, rows))
    print(f"{'case':<{width}}  {'python':>12}  {'compiled':>12}  {'speed-up':>8}")
    for label, t in rows.items():
        py = t["python"]
        cc = t.get("compiled")
        unit_scale, unit = (1e6, "us") if py < 1e-2 else (1.0, "s")
        cc_txt = f"{cc * unit_scale:10.3f} {unit}" if cc is not None else f"{'n/a':>12}"
        ratio = f"{py / cc:7.1f}x" if cc else f"{'n/a':>8}"
        print(f"{label:<{width}}  {py * unit_scale:10.3f} {unit}  {cc_txt}  {ratio}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
