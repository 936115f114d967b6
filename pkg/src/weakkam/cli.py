"""Command line interface.

Subcommands: solve, mather, aubry, flow, select, sweep. Every run writes
its artifacts into a directory named by the config hash, with a
summary.json carrying the config hash, tool version, residual and
wall-clock per stage. Data artifacts (CSV, JSON, SVG) are byte-identical
across reruns of the same config and seed; summary.json is the one file
exempt from that guarantee because it contains the timings.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 solver or
data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aubry import aubry_set, aubry_witness, calibration_graph, defect_field
from .config import (
    RunConfig,
    build_bound,
    build_model,
    build_penalty,
    build_reference,
    config_hash,
    load_config,
)
from .errors import ConfigError, DomainError, WeakKamError
from .flow import PhaseState, continuous_orbit, discrete_el_step, discrete_orbit, phase_distance
from .graph import TorusGrid, load_or_build_edge_graph
from .mather import (
    discrete_action_of_measure,
    holonomy_defect,
    mather_set,
    optimal_edge_measure,
    penalized_mather,
)
from .solver import solve_weak_kam
from .sweep import ReferenceSet, SweepPlan, kuratowski_report, tau_sweep

COMMANDS = ("solve", "mather", "aubry", "flow", "select", "sweep")
USAGE = (
    "usage: weakkam {solve|mather|aubry|flow|select|sweep} "
    "--config FILE [--out DIR] [--seed N] [--threads N]"
)


class _Stages:
    """Wall-clock bookkeeping per named stage."""

    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, name, fn):
        begin = time.perf_counter()
        result = fn()
        self.timings[name] = time.perf_counter() - begin
        return result


def _float_repr(value) -> str:
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (int, str)) else _float_repr(c) for c in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _phase_set_rows(phase):
    dim = phase.positions.shape[1] if phase.n_points else 1
    header = [f"x{k}" for k in range(dim)] + [f"v{k}" for k in range(dim)]
    rows = [
        list(phase.positions[i]) + list(phase.velocities[i]) for i in range(phase.n_points)
    ]
    return header, rows


def _measure_rows(graph, measure):
    xs, js = np.nonzero(measure.weights > 0)
    coords = graph.grid.coordinates(xs)
    vels = graph.velocities[js]
    dim = graph.grid.dim
    header = [f"x{k}" for k in range(dim)] + [f"v{k}" for k in range(dim)] + ["weight"]
    rows = [
        list(coords[i]) + list(vels[i]) + [measure.weights[xs[i], js[i]]]
        for i in range(xs.shape[0])
    ]
    return header, rows


def _solve_pipeline(config: RunConfig, stages: _Stages):
    model = stages.run("build_model", lambda: build_model(config))
    tau = float(config.value("dynamics", "tau", required=True))
    if tau <= 0:
        raise ConfigError(f"dynamics.tau must be positive, got {tau}")
    n = int(config.value("grid", "nodes_per_axis", required=True))
    grid = TorusGrid(model.dim, n)
    bound = stages.run("velocity_bound", lambda: build_bound(config, model, tau))
    cache_dir = os.environ.get("WEAKKAM_CACHE_DIR")
    graph = stages.run(
        "build_graph",
        lambda: load_or_build_edge_graph(grid, model, tau, bound, cache_dir=cache_dir),
    )
    method = config.value("solver", "method", default="karp")
    solution = stages.run("solve", lambda: solve_weak_kam(graph, method=method))
    return model, grid, bound, graph, solution


def _epsilon_for(config: RunConfig, graph, solution) -> float:
    override = config.value("tolerances", "set_epsilon", default=None)
    if override is not None:
        return float(override)
    return 10.0 * solution.residual + 1e-9


def _cmd_solve(config, out_dir, stages, args):
    from .plotting import plot_potential

    model, grid, bound, graph, solution = _solve_pipeline(config, stages)
    _write_json(
        out_dir / "solution.json",
        {
            "tau": solution.tau,
            "bar_L": solution.ergodic_rate,
            "residual": solution.residual,
            "n": grid.nodes_per_axis,
        },
    )
    coords = grid.all_coordinates()
    header = [f"x{k}" for k in range(grid.dim)] + ["u"]
    rows = [list(coords[i]) + [solution.potential[i]] for i in range(grid.n_nodes)]
    _write_csv(out_dir / "potential.csv", header, rows)
    stages.run(
        "figures", lambda: plot_potential(coords, solution.potential, out_dir / "potential.svg")
    )
    return {
        "residual": solution.residual,
        "eigenvalue": solution.eigenvalue,
        "bar_L": solution.ergodic_rate,
        "n_critical_components": solution.n_critical_components,
        "velocity_bound": bound.max_speed,
        "bound_provenance": bound.provenance,
    }


def _cmd_mather(config, out_dir, stages, args):
    from .plotting import plot_edge_measure, plot_phase_sets

    model, grid, bound, graph, solution = _solve_pipeline(config, stages)
    measure = stages.run("measure", lambda: optimal_edge_measure(graph, solution))
    epsilon = _epsilon_for(config, graph, solution)
    phase = stages.run("mather_set", lambda: mather_set(graph, solution, epsilon))
    header, rows = _measure_rows(graph, measure)
    _write_csv(out_dir / "measure.csv", header, rows)
    header, rows = _phase_set_rows(phase)
    _write_csv(out_dir / "mather_set.csv", header, rows)
    stages.run(
        "figures",
        lambda: (
            plot_edge_measure(graph, measure, out_dir / "measure.svg"),
            plot_phase_sets([("mather", phase)], out_dir / "mather_set.svg"),
        ),
    )
    return {
        "residual": solution.residual,
        "bar_L": solution.ergodic_rate,
        "epsilon": epsilon,
        "holonomy_defect": holonomy_defect(measure, graph),
        "action": discrete_action_of_measure(graph, measure),
        "n_points": phase.n_points,
    }


def _cmd_aubry(config, out_dir, stages, args):
    from .plotting import plot_phase_sets

    model, grid, bound, graph, solution = _solve_pipeline(config, stages)
    defects = stages.run("defect_field", lambda: defect_field(graph, solution))
    epsilon = _epsilon_for(config, graph, solution)
    cal = calibration_graph(defects, epsilon)
    phase = stages.run("aubry_set", lambda: aubry_set(cal))
    header, rows = _phase_set_rows(phase)
    _write_csv(out_dir / "aubry_set.csv", header, rows)
    stages.run("figures", lambda: plot_phase_sets([("aubry", phase)], out_dir / "aubry_set.svg"))
    payload = {
        "residual": solution.residual,
        "bar_L": solution.ergodic_rate,
        "epsilon": epsilon,
        "n_points": phase.n_points,
    }
    if config.value("aubry", "export_witnesses", default=False) and phase.n_points:
        count = min(3, phase.n_points)
        witnesses = [
            aubry_witness(cal, int(phase.nodes[i]), int(phase.offset_indices[i])).as_dict()
            for i in range(count)
        ]
        _write_json(out_dir / "witnesses.json", {"witnesses": witnesses})
    return payload


def _cmd_flow(config, out_dir, stages, args):
    from .plotting import plot_orbit

    model = stages.run("build_model", lambda: build_model(config))
    tau = float(config.value("dynamics", "tau", required=True))
    table = config.section("flow")
    start = PhaseState(
        np.asarray(table.get("start_position", [0.0] * model.dim), dtype=float),
        np.asarray(table.get("start_velocity", [0.0] * model.dim), dtype=float),
    )
    n_steps = int(table.get("steps", 50))
    if n_steps < 1:
        raise ConfigError(f"flow.steps must be at least 1, got {n_steps}")
    positions, velocities = stages.run(
        "discrete_orbit", lambda: discrete_orbit(model, tau, start, n_steps)
    )
    ref_positions, ref_velocities = stages.run(
        "reference_orbit", lambda: continuous_orbit(model, start, tau, n_steps)
    )
    gaps = np.zeros(n_steps + 1)
    for k in range(n_steps):
        stepped = discrete_el_step(model, tau, PhaseState(ref_positions[k], ref_velocities[k]))
        gaps[k + 1] = phase_distance(
            stepped.position, stepped.velocity, ref_positions[k + 1], ref_velocities[k + 1]
        )
    dim = model.dim
    header = (
        ["k"]
        + [f"x{i}" for i in range(dim)]
        + [f"v{i}" for i in range(dim)]
        + ["step_defect"]
    )
    rows = [
        [k] + list(positions[k]) + list(velocities[k]) + [gaps[k]]
        for k in range(n_steps + 1)
    ]
    _write_csv(out_dir / "orbit.csv", header, rows)
    stages.run("figures", lambda: plot_orbit(positions, velocities, out_dir / "orbit.svg"))
    return {
        "tau": tau,
        "steps": n_steps,
        "max_step_defect": float(gaps.max()),
        "residual": float(gaps.max()),
    }


def _cmd_select(config, out_dir, stages, args):
    from .plotting import plot_phase_sets

    model, grid, bound, graph, solution = _solve_pipeline(config, stages)
    psi, strength = build_penalty(config)
    measure, support = stages.run(
        "penalized", lambda: penalized_mather(graph, psi, strength, solution=solution)
    )
    header, rows = _measure_rows(graph, measure)
    _write_csv(out_dir / "selected_measure.csv", header, rows)
    header, rows = _phase_set_rows(support)
    _write_csv(out_dir / "support.csv", header, rows)
    stages.run(
        "figures", lambda: plot_phase_sets([("selected", support)], out_dir / "support.svg")
    )
    return {
        "residual": solution.residual,
        "bar_L": solution.ergodic_rate,
        "penalty_strength": strength,
        "action": discrete_action_of_measure(graph, measure),
        "holonomy_defect": holonomy_defect(measure, graph),
        "n_support_points": support.n_points,
    }


def _cmd_sweep(config, out_dir, stages, args):
    from .plotting import plot_sweep_trends

    model = stages.run("build_model", lambda: build_model(config))
    table = config.section("sweep")
    taus = [float(t) for t in table.get("taus", [])]
    if len(taus) < 3:
        raise ConfigError(f"sweep needs at least 3 time steps, got {len(taus)}")
    reference = build_reference(config, model)
    bound = None
    vel = config.section("velocity", required=False)
    if "max_speed" in vel:
        from .graph import VelocityBound

        bound = VelocityBound(float(vel["max_speed"]), "user")
    plan = SweepPlan(
        model=model,
        taus=taus,
        reference=reference,
        bound=bound,
        h_coupling=float(table.get("h_coupling", 1.0)),
        method=config.value("solver", "method", default="karp"),
        threads=args.threads,
    )
    report = stages.run("sweep", lambda: tau_sweep(plan))
    (out_dir / "report.csv").write_text("\n".join(report.csv_lines()) + "\n")
    verdicts = stages.run("verdicts", lambda: kuratowski_report(report))
    _write_json(out_dir / "verdicts.json", verdicts.as_dict())
    stages.run("figures", lambda: plot_sweep_trends(report, out_dir / "trends.svg"))
    worst_residual = max((row.residual for row in report.valid_rows()), default=float("nan"))
    return {
        "rows": len(report.rows),
        "failed_rows": len(report.rows) - len(report.valid_rows()),
        "row_errors": [row.error for row in report.rows if row.error],
        "residual": worst_residual,
        "row_runtimes": {repr(row.tau): row.runtime for row in report.rows},
        "velocity_bound": report.bound.max_speed,
        "upper_convergence_consistent": verdicts.upper_convergence_consistent,
        "lower_convergence_consistent": verdicts.lower_convergence_consistent,
    }


HANDLERS = {
    "solve": _cmd_solve,
    "mather": _cmd_mather,
    "aubry": _cmd_aubry,
    "flow": _cmd_flow,
    "select": _cmd_select,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 1
    command = argv[0]
    if command not in COMMANDS:
        print(f"unknown subcommand {command!r}\n{USAGE}", file=sys.stderr)
        return 1
    parser = argparse.ArgumentParser(prog=f"weakkam {command}", add_help=True)
    parser.add_argument("--config", required=True, help="TOML or JSON configuration file")
    parser.add_argument("--out", default=None, help="output root (default from config)")
    parser.add_argument("--seed", type=int, default=0, help="seed recorded for randomized runs")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    try:
        args = parser.parse_args(argv[1:])
    except SystemExit:
        return 1
    begin = time.perf_counter()
    try:
        config = load_config(args.config)
        digest = config_hash(config, command, args.seed)
        root = Path(args.out or config.value("output", "directory", default="runs"))
        out_dir = root / f"{command}-{digest}"
        out_dir.mkdir(parents=True, exist_ok=True)
        stages = _Stages()
        payload = HANDLERS[command](config, out_dir, stages, args)
        summary = {
            "command": command,
            "config_hash": digest,
            "version": __version__,
            "seed": args.seed,
            "threads": args.threads,
            "timings": {**stages.timings, "total": time.perf_counter() - begin},
        }
        summary.update(payload)
        _write_json(out_dir / "summary.json", summary)
        print(f"{command}: wrote {out_dir}")
        return 0
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except WeakKamError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
