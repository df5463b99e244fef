"""
Command-line front end.

    hydrovrb validate delta8.json
    hydrovrb run delta8.json --seed 7 --out runs/d8
    hydrovrb run delta8.json --set formation.gains.alpha=2
    hydrovrb sample-field single_fig8.json --bounds -5 5 -5 5 15 25 --counts 11 11 11
    hydrovrb allocate delta8_vrb.json --verify
    hydrovrb summarize runs/d8

Scenario arguments may be a path or the name of a bundled scenario. Exit
codes: 0 success, 1 validation failure, 2 runtime abort. The default output
directory is ``$HYDROVRB_OUTPUT_DIR`` (else ``./hydrovrb_runs``) joined with
the scenario name.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, engine, kernels
from .assignment import allocate, assignment_cost, brute_force_allocate, cost_matrix, yaw_matrix
from .flowfield import FlowBody, field_csv_text, grid_points, sample_field

OUTPUT_ENV = "HYDROVRB_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2

log = logging.getLogger("hydrovrb")


def _load(args) -> dict:
    overrides = [config.parse_override(s) for s in (args.set or [])]
    if getattr(args, "seed", None) is not None:
        overrides.append(("seed", args.seed))
    if getattr(args, "reallocate", None) is not None:
        overrides.append(("formation.reallocate_interval", args.reallocate))
    return config.load(args.scenario, overrides)


def _report_invalid(exc: config.ConfigError) -> int:
    for path, msg in exc.errors:
        print(f"error at {path}: {msg}", file=sys.stderr)
    return EXIT_INVALID


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _load(args)
    if cfg["mode"] == "formation":
        n_edges = len(config.slot_edges(cfg))
        print(f"valid: {cfg['name']} ({cfg['agents']['count']} agents, {n_edges} edges)", file=sys.stderr)
    else:
        print(f"valid: {cfg['name']} (single agent)", file=sys.stderr)
    sys.stdout.write(_json(cfg))
    return EXIT_OK


def output_dir(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, "hydrovrb_runs")) / cfg["name"]


def cmd_run(args) -> int:
    cfg = _load(args)
    out = output_dir(args, cfg)
    backend = kernels.get_backend(args.backend) if args.backend else None
    try:
        result = engine.run(cfg, backend)
    except engine.SimulationAbort as exc:
        dump = out / "abort_dump.json"
        engine.atomic_write(dump, _json({"error": str(exc), "world": exc.dump, "config": cfg}))
        print(f"aborted: {exc}; last good state in {dump}", file=sys.stderr)
        return EXIT_ABORT
    summary = result.summary()
    engine.atomic_write(out / "trajectory.csv", result.trajectory_csv())
    engine.atomic_write(out / "metrics.csv", result.metrics_csv())
    engine.atomic_write(out / "summary.json", _json(_finite(summary)))
    print(_one_line(summary))
    return EXIT_OK


def _finite(obj):
    """JSON has no infinities; map them to null."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _fmt(x, unit="m") -> str:
    return "n/a" if x is None else f"{x:.4f} {unit}"


def _one_line(s: dict) -> str:
    return (
        f"{s['name']}: min clearance {_fmt(s.get('min_clearance'))}, "
        f"max settled residual {_fmt(s.get('max_residual_after_settling'))}, "
        f"wall time {s['wall_time_s']:.2f} s"
    )


def cmd_sample_field(args) -> int:
    cfg = _load(args)
    av = cfg["avoidance"]
    bodies = [
        FlowBody(o["position"], o["velocity"], kind=o.get("kind", "doublet"), radius=o.get("R_d", av["R_d"]),
                 buffer=o.get("epsilon", av["epsilon"]), separation=o.get("separation", 1.0),
                 strength=o.get("strength", 1.0))
        for o in cfg["obstacles"]
    ]
    if args.freestream is not None:
        v_inf = np.array(args.freestream, dtype=float)
    elif cfg["mode"] == "formation":
        v_inf = np.array(cfg["formation"]["path"]["velocity"], dtype=float)
    else:
        v_inf = engine.figure_eight_reference(0.0, cfg["reference"])[1]
    try:
        pts = grid_points(args.bounds, args.counts)
    except ValueError as exc:
        print(f"error at --bounds/--counts: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = sample_field(pts, bodies, v_inf, mode=av["superposition"])
    text = field_csv_text(rows)
    if args.out:
        engine.atomic_write(args.out, text)
        print(f"wrote {len(rows)} nodes to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_allocate(args) -> int:
    cfg = _load(args)
    if cfg["mode"] != "formation":
        print("error at .mode: allocation needs a formation scenario", file=sys.stderr)
        return EXIT_INVALID
    sim = engine.Simulation(cfg)
    r_cm, _ = sim.path.center(0.0)
    psi, _ = sim.path.heading(0.0)
    slots = yaw_matrix(psi) @ sim.geometry.slots
    rel = sim.world.states[:, 0:3] - r_cm
    perm = allocate(rel, slots)
    cost = assignment_cost(cost_matrix(rel, slots), perm)
    report = {"allocation": perm.tolist(), "cost": cost}
    if args.verify and len(perm) > 9:
        print("error at --verify: exhaustive search is limited to 9 agents", file=sys.stderr)
        return EXIT_INVALID
    if args.verify:
        bf_perm, bf_cost = brute_force_allocate(rel, slots)
        report["brute_force_cost"] = bf_cost
        report["brute_force_allocation"] = bf_perm.tolist()
        report["optimal"] = bool(abs(bf_cost - cost) <= 1e-9 * max(1.0, bf_cost))
    sys.stdout.write(_json(report))
    return EXIT_OK


def cmd_summarize(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "summary.json"
    try:
        s = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    keys = [
        "name", "seed", "backend", "ticks", "final_time", "min_clearance", "min_clearance_per_agent",
        "rms_reference_error", "rms_reference_error_outside_avoidance", "max_residual_after_settling",
        "max_residual_cruise", "max_residual_avoidance", "resettle_time", "max_constraint_solve_residual",
        "saturated_substeps", "inside_body_projections", "avoidance_windows", "wall_time_s",
    ]
    width = max(map(len, keys))
    for k in keys:
        if k in s:
            print(f"{k:<{width}}  {s[k]}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrovrb", description="Doublet-flow avoidance with rigid-body formations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", help="scenario JSON path or bundled scenario name")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")

    sp = sub.add_parser("validate", help="check a scenario and print the resolved config")
    scenario_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("run", help="run a scenario and write CSV/JSON outputs")
    scenario_args(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<name>)")
    sp.add_argument("--reallocate", type=float, metavar="SECONDS", help="re-run slot allocation every SECONDS")
    sp.add_argument("--backend", choices=["compiled", "python"], help="kernel backend (default: best available)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sample-field", help="export the flow field on a grid at t = 0")
    scenario_args(sp)
    sp.add_argument("--bounds", type=float, nargs=6, required=True, metavar=("X0", "X1", "Y0", "Y1", "Z0", "Z1"))
    sp.add_argument("--counts", type=int, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    sp.add_argument("--freestream", type=float, nargs=3, metavar=("VX", "VY", "VZ"))
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_sample_field)

    sp = sub.add_parser("allocate", help="print the optimal slot allocation for the initial positions")
    scenario_args(sp)
    sp.add_argument("--verify", action="store_true", help="cross-check against exhaustive search")
    sp.set_defaults(func=cmd_allocate)

    sp = sub.add_parser("summarize", help="print the scalar results of a finished run")
    sp.add_argument("path", help="run directory or summary.json")
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except config.ConfigError as exc:
        return _report_invalid(exc)
    except FileNotFoundError as exc:
        print(f"error: scenario not found: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
