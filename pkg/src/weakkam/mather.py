"""Holonomic edge measures, action minimizers and the discrete Mather set.

A probability measure on the edges of the graph is holonomic when the mass
entering each node equals the mass leaving it. Its action is the weighted
sum of edge costs; the minimum over holonomic measures is the eigenvalue,
attained by uniform measures on minimum-mean cycles. Edges are identified
with phase points through (node, offset) -> (x, offset * h / tau), which
is how supports and Mather sets become subsets of torus x velocity space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _graphops
from .errors import ConfigError, DataError, DomainError, SolverError
from .graph import EdgeGraph
from .solver import CalibratedConfiguration, WeakKamSolution, solve_weak_kam
from .torus import minimal_displacement

__all__ = [
    "EdgeMeasure",
    "PhaseSet",
    "phase_distance",
    "phase_distance_matrix",
    "holonomy_defect",
    "discrete_action_of_measure",
    "optimal_edge_measure",
    "mather_set",
    "cesaro_measure",
    "recovery_measure",
    "RecoveryResult",
    "penalized_mather",
]


@dataclass
class EdgeMeasure:
    """Nonnegative weights on the (node, offset) edge table, total mass 1."""

    weights: np.ndarray
    tau: float

    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass
class PhaseSet:
    """A finite set of phase points (position, velocity) with its origin tag.

    kind is "mather", "aubry" or "reference". For sets extracted from an
    edge graph, nodes and offset_indices record which edge each point came
    from, in (node, offset) row-major order.
    """

    positions: np.ndarray
    velocities: np.ndarray
    kind: str
    tau: float | None = None
    epsilon: float | None = None
    nodes: np.ndarray | None = field(default=None, repr=False)
    offset_indices: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]


def phase_distance(x_a, v_a, x_b, v_b) -> float:
    """Distance on torus x velocity space: torus distance plus velocity distance."""
    dx = np.linalg.norm(np.atleast_1d(minimal_displacement(x_a, x_b)))
    dv = np.linalg.norm(np.atleast_1d(np.asarray(v_a, float) - np.asarray(v_b, float)))
    return float(dx + dv)


def phase_distance_matrix(set_a: PhaseSet, set_b: PhaseSet) -> np.ndarray:
    """All pairwise phase distances, shape (a.n_points, b.n_points)."""
    dx = minimal_displacement(set_a.positions[:, None, :], set_b.positions[None, :, :])
    dv = set_a.velocities[:, None, :] - set_b.velocities[None, :, :]
    return np.linalg.norm(dx, axis=-1) + np.linalg.norm(dv, axis=-1)


def _validate_measure(measure: EdgeMeasure, graph: EdgeGraph) -> None:
    if measure.weights.shape != graph.costs.shape:
        raise DataError(
            f"measure shape {measure.weights.shape} does not match the edge "
            f"table {graph.costs.shape}"
        )
    if np.any(measure.weights < 0):
        raise DataError("edge measure has negative weights")
    mass = measure.total_mass()
    if abs(mass - 1.0) > 1e-12:
        raise DataError(f"edge measure has total mass {mass!r}, expected 1")


def holonomy_defect(measure: EdgeMeasure, graph: EdgeGraph) -> float:
    """Max over nodes of |incoming mass - outgoing mass|."""
    _validate_measure(measure, graph)
    out_mass = measure.weights.sum(axis=1)
    in_mass = np.zeros(graph.n_nodes)
    for j in range(graph.n_offsets):
        np.add.at(in_mass, graph.heads[:, j], measure.weights[:, j])
    return float(np.abs(in_mass - out_mass).max())


def discrete_action_of_measure(graph: EdgeGraph, measure: EdgeMeasure) -> float:
    """Weighted sum of edge costs under the measure."""
    _validate_measure(measure, graph)
    return float(np.sum(measure.weights * graph.costs))


def optimal_edge_measure(
    graph: EdgeGraph, solution: WeakKamSolution, tight_tol: float | None = None
) -> EdgeMeasure:
    """A minimizing holonomic measure from the critical components.

    Each cyclic tight component contributes one cycle carrying equal mass;
    components share the total mass equally. The result is holonomic by
    construction and its action equals the eigenvalue up to rounding.
    """
    if tight_tol is None:
        tight_tol = 1e-9 * (1.0 + abs(solution.eigenvalue))
    u = solution.potential
    slack = u[:, None] + (graph.costs - solution.eigenvalue) - u[graph.heads]
    mask = slack <= tight_tol
    labels, cyclic = _graphops.strong_components(graph, mask)
    components = np.nonzero(cyclic)[0]
    if components.size == 0:
        raise SolverError("no tight cycle found; solution and graph disagree")
    weights = np.zeros_like(graph.costs)
    share = 1.0 / components.size
    for comp in components:
        nodes, offs = _graphops.component_cycle(graph, mask, labels, comp)
        for node, off in zip(nodes, offs):
            weights[node, off] += share / len(nodes)
    return EdgeMeasure(weights=weights, tau=graph.tau)


def _phase_set_from_edges(
    graph: EdgeGraph, xs: np.ndarray, js: np.ndarray, kind: str, epsilon: float | None
) -> PhaseSet:
    return PhaseSet(
        positions=graph.grid.coordinates(xs),
        velocities=graph.velocities[js],
        kind=kind,
        tau=graph.tau,
        epsilon=epsilon,
        nodes=xs,
        offset_indices=js,
    )


def mather_set(graph: EdgeGraph, solution: WeakKamSolution, epsilon: float) -> PhaseSet:
    """Phase points of edges on cycles of the epsilon-calibrated subgraph.

    An edge survives when its calibration defect is at most epsilon and it
    lies on a cycle of such edges (both ends in one strong component).
    """
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    u = solution.potential
    defect = u[:, None] + (graph.costs - solution.eigenvalue) - u[graph.heads]
    mask = defect <= epsilon
    labels, cyclic = _graphops.strong_components(graph, mask)
    xs, js = np.nonzero(mask)
    ys = graph.heads[xs, js]
    on_cycle = (labels[xs] == labels[ys]) & cyclic[labels[xs]]
    return _phase_set_from_edges(graph, xs[on_cycle], js[on_cycle], "mather", epsilon)


def cesaro_measure(config: CalibratedConfiguration, graph: EdgeGraph) -> EdgeMeasure:
    """Empirical edge measure of a backward configuration.

    Each traversed edge (x_{-(k+1)}, x_{-k}) gets mass 1/n_steps. The
    holonomy defect telescopes: only the two endpoints contribute, so it
    is at most 2/n_steps.
    """
    if config.n_steps < 1:
        raise ConfigError("configuration has no steps")
    weights = np.zeros_like(graph.costs)
    tails = config.nodes[1:]
    np.add.at(weights, (tails, config.step_offsets), 1.0 / config.n_steps)
    return EdgeMeasure(weights=weights, tau=graph.tau)


@dataclass(frozen=True)
class RecoveryResult:
    """Edge measure pushed from a continuous orbit, with its diagnostics."""

    measure: EdgeMeasure
    holonomy: float
    action_rate: float


def recovery_measure(
    graph: EdgeGraph,
    positions: np.ndarray,
    velocities: np.ndarray,
    sample_dt: float,
) -> RecoveryResult:
    """Push a sampled continuous orbit onto the edge graph.

    positions[k] is the orbit at time k * sample_dt; each time s with
    s + tau still sampled produces the edge joining the nearest node of
    the orbit at s to the nearest node at s + tau, weight 1/count. The
    sampling step must divide tau and be at most tau / 10; orbit samples
    whose hop leaves the stencil raise DataError.
    """
    tau = graph.tau
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    if sample_dt <= 0 or sample_dt > tau / 10 + 1e-15:
        raise ConfigError(f"sampling step must be in (0, tau/10], got {sample_dt}")
    shift = tau / sample_dt
    if abs(shift - round(shift)) > 1e-6 * shift:
        raise ConfigError(
            f"sampling step {sample_dt} does not divide the time step {tau}"
        )
    shift = int(round(shift))
    n_samples = positions.shape[0]
    if n_samples <= shift:
        raise ConfigError("orbit is shorter than one time step")
    if (n_samples - 1) * sample_dt < 100 * tau - 1e-9:
        raise ConfigError(
            f"orbit covers {(n_samples - 1) * sample_dt:.3g} time units, "
            f"need at least 100 steps ({100 * tau:.3g})"
        )
    grid = graph.grid
    offset_lookup = {tuple(off): j for j, off in enumerate(graph.offsets)}
    tails = grid.nearest_node(positions[:-shift])
    heads = grid.nearest_node(positions[shift:])
    hop = minimal_displacement(grid.coordinates(tails), grid.coordinates(heads))
    hop_offsets = np.rint(hop / grid.spacing).astype(np.int64)
    weights = np.zeros_like(graph.costs)
    count = tails.shape[0]
    for k in range(count):
        key = tuple(hop_offsets[k])
        j = offset_lookup.get(key)
        if j is None:
            speed = np.linalg.norm(hop_offsets[k] * grid.spacing / tau)
            raise DataError(
                f"orbit sample {k} hops at speed {speed:.3g}, outside the stencil"
            )
        weights[tails[k], j] += 1.0 / count
    measure = EdgeMeasure(weights=weights, tau=tau)
    return RecoveryResult(
        measure=measure,
        holonomy=holonomy_defect(measure, graph),
        action_rate=discrete_action_of_measure(graph, measure) / tau,
    )


def penalized_mather(
    graph: EdgeGraph,
    psi,
    penalty: float,
    solution: WeakKamSolution | None = None,
    method: str = "karp",
) -> tuple[EdgeMeasure, PhaseSet]:
    """Minimizing measure of the penalty-tilted action.

    The costs become c + penalty * tau * psi(x, v) with psi evaluated at
    the edge tail and the edge velocity; the tilted eigenproblem is solved
    from scratch and its optimal measure returned together with the
    support as a phase set. penalty = 0 reproduces optimal_edge_measure.
    """
    if penalty < 0:
        raise DomainError(f"penalty strength must be nonnegative, got {penalty}")
    if penalty == 0.0:
        base = solution if solution is not None else solve_weak_kam(graph, method=method)
        measure = optimal_edge_measure(graph, base)
    else:
        coords = graph.grid.all_coordinates()
        tilted = graph.costs.copy()
        for j in range(graph.n_offsets):
            values = np.asarray(psi(coords, graph.velocities[j]), dtype=float)
            tilted[:, j] += penalty * graph.tau * values
        if not np.all(np.isfinite(tilted)):
            raise DataError("penalty function produced non-finite costs")
        tilted_graph = EdgeGraph(
            grid=graph.grid,
            tau=graph.tau,
            offsets=graph.offsets,
            costs=tilted,
            heads=graph.heads,
            bound=graph.bound,
        )
        tilted_solution = solve_weak_kam(tilted_graph, method=method)
        measure = optimal_edge_measure(tilted_graph, tilted_solution)
    xs, js = np.nonzero(measure.weights > 0)
    support = _phase_set_from_edges(graph, xs, js, "mather", None)
    return measure, support
