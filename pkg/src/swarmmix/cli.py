"""Command line front end.

Three subcommands:

* ``run``    — simulate one scenario file in one connectivity mode and write
  ``trajectory.csv``, ``metrics.csv``, ``tree.txt`` (and optional SVG plots)
  into the output directory.  Outputs are byte-identical across reruns.
* ``sweep``  — team-size scaling study: short closed-loop runs on generated
  scenarios for every connectivity mode x size x repetition, one aggregate
  row per cell in ``sweep.csv``.
* ``verify`` — execute the acceptance checks and print one line per check.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .acceptance import run_all
from .core import Scenario, ScenarioError, load_scenario_file
from .graph import build_comm_graph, kruskal_mccst
from .behaviors import nominal_controls
from .protocol import ProtocolError
from .scenariogen import random_scenario
from .sim import ConnectivityMode, RunResult, SimulationError, run

__all__ = ["main", "build_parser"]

_MODES = {m.value: m for m in ConnectivityMode}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmmix",
        description="Connectivity-constrained multi-robot behavior mixing")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--mode", choices=sorted(_MODES), default="mccst",
                       help="connectivity mode (default: mccst)")
    p_run.add_argument("--steps", type=int, default=None,
                       help="override the scenario step count")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario RNG seed")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--plots", action="store_true",
                       help="also write SVG metric plots")

    p_sweep = sub.add_parser("sweep", help="team-size scaling study")
    p_sweep.add_argument("--sweep", default="10,20,40,60,80,100",
                         help="comma-separated team sizes")
    p_sweep.add_argument("--reps", type=int, default=3,
                         help="scenarios per team size (default: 3)")
    p_sweep.add_argument("--steps", type=int, default=150,
                         help="steps per run (default: 150)")
    p_sweep.add_argument("--seed", type=int, default=0, help="base seed")
    p_sweep.add_argument("--out", default="out", help="output directory")

    sub.add_parser("verify", help="run the acceptance checks")
    return parser


# -- run ---------------------------------------------------------------------

def _write_run_outputs(result: RunResult, scenario: Scenario,
                       mode: ConnectivityMode, out: Path,
                       trajectory_rows: list[tuple]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "robot_id", "x", "y", "heading",
                    "ux_nom", "uy_nom", "ux_star", "uy_star"])
        for row in trajectory_rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])

    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "min_pair_distance", "lambda2", "subgroups_connected",
                    "perturbation", "mean_dist_to_target",
                    "protocol_messages", "qp_status"])
        for rep in result.reports:
            w.writerow([_fmt(rep.time), _fmt(rep.min_pair_distance),
                        _fmt(rep.lambda2),
                        ";".join(str(int(c)) for c in rep.subgroup_connected),
                        _fmt(rep.perturbation), _fmt(rep.mean_dist_to_target),
                        rep.protocol_messages, rep.qp_status])

    # Enforced link set at the end of the run, with final-state weights.
    world = result.world
    positions = np.array([r.position for r in world.robots])
    limits = [r.speed_limit for r in world.robots]
    u_nom = nominal_controls(positions, limits, world.assignment)
    graph = build_comm_graph(world.robots, world.config, u_nom)
    if world.enforced_edges is not None:
        edges = sorted(world.enforced_edges)
        weights = {e: graph.weight.get(e, float("nan")) for e in edges}
        intra = {e: graph.intra.get(e, scenario.robots[e[0]].subgroup
                 == scenario.robots[e[1]].subgroup) for e in edges}
    else:
        tree = kruskal_mccst(graph)
        edges = sorted(tree.edges)
        weights = {e: graph.weight[e] for e in edges}
        intra = {e: graph.intra[e] for e in edges}
    with open(out / "tree.txt", "w") as f:
        for (i, j) in edges:
            f.write(f"{i} {j} {_fmt(weights[(i, j)])} {int(intra[(i, j)])}\n")


def _write_plots(result: RunResult, out: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "swarmmix"

    t = [rep.time for rep in result.reports]
    panels = [
        ("min_distance", "min pair distance",
         [rep.min_pair_distance for rep in result.reports]),
        ("lambda2", "algebraic connectivity",
         [rep.lambda2 for rep in result.reports]),
        ("perturbation", "mean control perturbation",
         [rep.perturbation for rep in result.reports]),
        ("target_distance", "mean distance to target",
         [rep.mean_dist_to_target for rep in result.reports]),
    ]
    for name, label, series in panels:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(t, series, lw=1.0)
        ax.set_xlabel("time [s]")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / f"{name}.svg", metadata={"Date": None})
        plt.close(fig)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario_file(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, config=replace(scenario.config, seed=args.seed))
    mode = _MODES[args.mode]

    trajectory_rows: list[tuple] = []

    def record(k, world, u_nom, sol):
        u = sol.u_star
        for idx, r in enumerate(world.robots):
            trajectory_rows.append((
                world.time, r.id, r.position[0], r.position[1], r.heading,
                float(u_nom[idx, 0]), float(u_nom[idx, 1]),
                float(u[2 * idx]), float(u[2 * idx + 1])))

    result = run(scenario, mode, steps=args.steps, observer=record)
    out = Path(args.out)
    _write_run_outputs(result, scenario, mode, out, trajectory_rows)
    if args.plots:
        _write_plots(result, out)
    last = result.reports[-1] if result.reports else None
    if last is not None:
        print(f"{len(result.reports)} steps, final mean distance to target "
              f"{last.mean_dist_to_target:.3f}, min pair distance over run "
              f"{min(r.min_pair_distance for r in result.reports):.4f}")
    if result.stalled_at is not None:
        print(f"note: motion stalled at step {result.stalled_at}")
    print(f"wrote {out / 'trajectory.csv'}, {out / 'metrics.csv'}, {out / 'tree.txt'}")
    return 0


# -- sweep -------------------------------------------------------------------

def _sweep_cell(task: tuple[str, int, int, int, int]) -> dict:
    mode, n, rep, base_seed, steps = task
    # The scenario seed depends only on (n, rep) so every mode sees the same
    # initial placement and the rows are comparable across modes.
    scenario = random_scenario(n, min(4, n), seed=base_seed + rep,
                               target_dist=2.0, step_count=steps)
    t0 = time.time()
    result = run(scenario, _MODES[mode])
    wall = time.time() - t0
    msgs = [r.protocol_messages for r in result.reports]
    return {
        "mode": mode,
        "n": n,
        "rep": rep,
        "messages_mean": float(np.mean(msgs)),
        "messages_min": int(np.min(msgs)),
        "messages_max": int(np.max(msgs)),
        "wall_seconds": f"{wall:.6f}",
        "final_dist": result.reports[-1].mean_dist_to_target,
        "perturbation": float(np.mean([r.perturbation for r in result.reports])),
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        sizes = sorted({int(tok) for tok in args.sweep.split(",") if tok.strip()})
    except ValueError:
        print(f"error: bad --sweep list {args.sweep!r}", file=sys.stderr)
        return 1
    if not sizes or any(n < 2 for n in sizes):
        print("error: --sweep needs team sizes >= 2", file=sys.stderr)
        return 1
    modes = [m.value for m in ConnectivityMode]
    tasks = [(mode, n, rep, args.seed, args.steps)
             for mode in modes for n in sizes for rep in range(args.reps)]
    with ProcessPoolExecutor() as pool:
        cells = list(pool.map(_sweep_cell, tasks))
    cells.sort(key=lambda c: (modes.index(c["mode"]), c["n"], c["rep"]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(cells[0].keys()))
        w.writeheader()
        for cell in cells:
            w.writerow(cell)
    for mode in modes:
        for n in sizes:
            group = [c for c in cells if c["mode"] == mode and c["n"] == n]
            print(f"{mode:12s} n={n:4d}  "
                  f"messages/step mean {np.mean([c['messages_mean'] for c in group]):8.1f}  "
                  f"wall {np.mean([float(c['wall_seconds']) for c in group]):6.2f}s  "
                  f"final dist {np.mean([c['final_dist'] for c in group]):.3f}")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


# -- verify ------------------------------------------------------------------

def cmd_verify(args: argparse.Namespace) -> int:
    results = run_all()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_verify(args)
    except (ScenarioError, SimulationError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
