"""Command-line entry point.

Subcommands: simulate (event trace + summary), verify (randomized matrix
property report), chain (ergodic run with optional uniqueness and contraction
probes), oracle (convex optimum), compare (long-run means against the
optimum).  Exit codes: 0 success, 1 configuration failure, 2 property
failure, 3 missing input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chain import contraction_on_average, run_chain, uniqueness_probe
from .config import load_config
from .engine import run_simulation
from .matrices import property_suite
from .model import ConfigError, default_initial_allocation
from .oracle import social_cost, solve_optimal
from .reports import RunManifest, write_json

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PROPERTY = 2
EXIT_MISSING = 3


def _pretty_table(rows, headers) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(str(v).ljust(w) for v, w in zip(row, widths))
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    setup = load_config(args.config)
    out = _out_dir(args)
    manifest = RunManifest("simulate", args.config, args.seed if args.seed is not None else setup.config.seed, out)
    trace = run_simulation(setup.config, setup.costs, args.events, seed=args.seed, x0=setup.x0)
    summary = trace.summary()
    path = write_json(out / "summary.json", summary)
    manifest.add(path)
    csv_path = out / "trace.csv"
    trace.write_csv(str(csv_path))
    manifest.add(csv_path)
    manifest.write()
    if args.pretty:
        rows = [(i, j, f"{summary['event_average'][i][j]:.6f}") for i in range(trace.config.n)
                for j in range(trace.config.m)]
        print(_pretty_table(rows, ("agent", "resource", "event_average")))
    else:
        print(f"simulate: {trace.n_events} events -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    setup = load_config(args.config)
    cfg = setup.config
    out = _out_dir(args)
    manifest = RunManifest("verify", args.config, args.seed if args.seed is not None else cfg.seed, out)
    seed = cfg.seed if args.seed is None else args.seed
    results = property_suite(cfg.n, cfg.window, cfg.m, cfg.beta, trials=args.trials, seed=seed)
    doc = {
        "schema": "aimdalloc.verify.v1",
        "trials": args.trials,
        "seed": seed,
        "properties": [r.to_dict() for r in results],
        "all_passed": all(r.passed for r in results),
    }
    path = write_json(out / "verify.json", doc)
    manifest.add(path)
    manifest.write()
    if args.pretty:
        rows = [(r.name, "pass" if r.passed else "FAIL", f"{r.worst:.3e}") for r in results]
        print(_pretty_table(rows, ("property", "status", "worst")))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name} (worst {r.worst:.3e})")
    return EXIT_OK if doc["all_passed"] else EXIT_PROPERTY


def cmd_chain(args) -> int:
    setup = load_config(args.config)
    cfg = setup.config
    if args.steps < cfg.window:
        print(f"error: --steps must be at least the window T={cfg.window}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    manifest = RunManifest("chain", args.config, seed, out)
    run = run_chain(cfg, setup.costs, args.steps, seed=seed, x0=setup.x0,
                    keep_trajectory=args.trajectory)
    doc = run.summary()
    path = write_json(out / "chain.json", doc)
    manifest.add(path)
    if args.trajectory:
        traj_path = out / "trajectory.csv"
        run.write_trajectory_csv(str(traj_path))
        manifest.add(traj_path)
    if args.probe_uniqueness:
        x0_b = default_initial_allocation(cfg) * 0.5
        x0_b[0] += default_initial_allocation(cfg)[0]  # lopsided but interior start
        probe = uniqueness_probe(cfg, setup.costs, args.steps, seed_a=seed, seed_b=seed + 1,
                                 x0_a=setup.x0, x0_b=x0_b)
        path = write_json(out / "uniqueness.json", probe.to_dict())
        manifest.add(path)
    if args.contraction:
        warm_a = run_chain(cfg, setup.costs, max(4 * cfg.window, 16), seed=seed + 2,
                           x0=setup.x0, keep_trajectory=False).state
        x0_b = default_initial_allocation(cfg) * 0.5
        x0_b[0] += default_initial_allocation(cfg)[0]
        warm_b = run_chain(cfg, setup.costs, max(4 * cfg.window, 16), seed=seed + 3,
                           x0=x0_b, keep_trajectory=False).state
        report = contraction_on_average(cfg, setup.costs, warm_a, warm_b,
                                        samples=args.samples, seed=seed + 4)
        path = write_json(out / "contraction.json", report.to_dict())
        manifest.add(path)
    manifest.write()
    print(f"chain: {args.steps} steps -> {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    setup = load_config(args.config)
    out = _out_dir(args)
    manifest = RunManifest("oracle", args.config, setup.config.seed, out)
    opt = solve_optimal(setup.config, setup.costs)
    path = write_json(out / "oracle.json", opt.to_dict())
    manifest.add(path)
    manifest.write()
    if args.pretty:
        rows = [(i, j, f"{opt.allocation[i, j]:.6f}") for i in range(setup.config.n)
                for j in range(setup.config.m)]
        print(_pretty_table(rows, ("agent", "resource", "optimal")))
    else:
        print(f"oracle: objective {opt.objective:.9g} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    setup = load_config(args.config)
    cfg = setup.config
    summary_path = Path(args.summary)
    if not summary_path.exists():
        print(f"error: missing input {summary_path}", file=sys.stderr)
        return EXIT_MISSING
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    key = "agent_means" if "agent_means" in summary else "event_average"
    means = np.asarray(summary[key], dtype=float)
    if means.shape != (cfg.n, cfg.m):
        print(f"error: {summary_path} holds a {means.shape} mean matrix, expected {(cfg.n, cfg.m)}",
              file=sys.stderr)
        return EXIT_MISSING
    out = _out_dir(args)
    manifest = RunManifest("compare", args.config, cfg.seed, out)
    opt = solve_optimal(cfg, setup.costs)
    gap = np.abs(means - opt.allocation)
    cost_at_means = social_cost(setup.costs, means)
    doc = {
        "schema": "aimdalloc.compare.v1",
        "means_source": str(summary_path),
        "means_key": key,
        "abs_gap": gap.tolist(),
        "max_gap_fraction_of_capacity": float((gap / cfg.capacity).max()),
        "social_cost_at_means": cost_at_means,
        "optimal_social_cost": opt.objective,
        "relative_cost_gap": cost_at_means / opt.objective - 1.0,
    }
    path = write_json(out / "compare.json", doc)
    manifest.add(path)
    manifest.write()
    if args.pretty:
        rows = [(i, j, f"{means[i, j]:.6f}", f"{opt.allocation[i, j]:.6f}", f"{gap[i, j]:.6f}")
                for i in range(cfg.n) for j in range(cfg.m)]
        print(_pretty_table(rows, ("agent", "resource", "long_run_mean", "optimal", "abs_gap")))
    else:
        print(f"compare: max gap {doc['max_gap_fraction_of_capacity']:.4%} of capacity -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aimdalloc",
                                     description="AIMD multi-resource allocation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the event-driven simulator")
    p.add_argument("config")
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="randomized matrix property report")
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("chain", help="run the windowed average chain")
    p.add_argument("config")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--probe-uniqueness", action="store_true")
    p.add_argument("--contraction", action="store_true")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--trajectory", action="store_true",
                   help="also write the full state trajectory as CSV")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("oracle", help="solve for the cost-minimizing allocation")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="compare long-run means against the optimum")
    p.add_argument("config")
    p.add_argument("--summary", required=True, help="summary.json or chain.json from a previous run")
    p.add_argument("--out", default="out")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.violations:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing input {exc.filename}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
