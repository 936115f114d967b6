"""Min-plus eigenproblem on the edge graph and its calibrated structure.

The one-step optimality equation on the edge graph,

    u(y) + lam = min over in-edges (x, y) of  u(x) + c(x, y),

has a unique additive eigenvalue lam equal to the minimum mean cycle cost.
Dividing by tau gives the discrete ergodic rate. The solver pipeline is:

1. lam by Karp's dynamic program (or Howard policy iteration),
2. potentials p for the reduced costs c - lam from a virtual source
   (Bellman-Ford to a fixed point),
3. tight edges = edges whose reduced slack vanishes; critical nodes are
   the nodes of strongly connected components of the tight subgraph that
   contain a cycle,
4. u = multi-source shortest path distance from the critical nodes in
   reduced costs, shifted so min u = 0.

Backward calibrated configurations descend the argmin predecessors of u
and realize the eigenvalue along every step up to the recorded defects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DataError, DomainError, SolverError
from .graph import EdgeGraph, VelocityBound

__all__ = [
    "WeakKamSolution",
    "CalibratedConfiguration",
    "SpeedCheck",
    "min_mean_cycle",
    "karp_min_mean_cycle",
    "howard_min_mean_cycle",
    "solve_weak_kam",
    "lax_oleinik_residual",
    "backward_calibrated_configuration",
    "velocity_check",
]


@dataclass
class WeakKamSolution:
    """Eigenvalue, ergodic rate, potential and critical set of one graph.

    eigenvalue is the per-step value lam (the minimum mean cycle cost);
    ergodic_rate = eigenvalue / tau. potential is u with min u = 0.
    n_critical_components counts the cyclic components of the tight
    subgraph; when it exceeds 1 the potential is one weak KAM solution
    among several.
    """

    tau: float
    eigenvalue: float
    ergodic_rate: float
    potential: np.ndarray
    residual: float
    critical_nodes: np.ndarray
    n_critical_components: int
    method: str


def _validate_graph(graph: EdgeGraph) -> None:
    if graph.n_edges == 0:
        raise DataError("edge graph has no edges")
    if not np.all(np.isfinite(graph.costs)):
        raise DataError("edge costs must all be finite")


def karp_min_mean_cycle(graph: EdgeGraph) -> float:
    """Minimum mean cycle cost by Karp's dynamic program.

    table[k][v] is the minimum cost of a k-edge path ending at v, with
    every node usable as a free start. The eigenvalue is
    min over v of max over k < n of (table[n][v] - table[k][v]) / (n - k).
    """
    _validate_graph(graph)
    n = graph.n_nodes
    tails, cost_in = graph.incoming
    table = np.empty((n + 1, n))
    table[0] = 0.0
    for k in range(1, n + 1):
        table[k] = (table[k - 1][tails] + cost_in).min(axis=1)
    spans = (n - np.arange(n)).astype(float)
    ratios = (table[n][None, :] - table[:n, :]) / spans[:, None]
    return float(ratios.max(axis=0).min())


def _policy_values(graph: EdgeGraph, policy: np.ndarray):
    """Per-node cycle mean and bias of a deterministic policy.

    Each node follows succ(x) = heads[x, policy[x]] into exactly one cycle.
    gain[x] is the mean cost of that cycle; bias satisfies
    bias[x] = c(x, succ) - gain[x] + bias[succ] with bias fixed to 0 at the
    smallest-index node of each cycle.
    """
    n = graph.n_nodes
    rows = np.arange(n)
    succ = graph.heads[rows, policy]
    step_cost = graph.costs[rows, policy]
    gain = np.empty(n)
    bias = np.empty(n)
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on current walk, 2 done
    for start in range(n):
        if state[start] == 2:
            continue
        path = []
        x = start
        while state[x] == 0:
            state[x] = 1
            path.append(x)
            x = int(succ[x])
        if state[x] == 1:
            # new cycle: path[cut:] closes it
            cut = path.index(x)
            cycle = path[cut:]
            total = float(step_cost[cycle].sum())
            mean = total / len(cycle)
            root = min(cycle)
            r = cycle.index(root)
            cycle = cycle[r:] + cycle[:r]
            gain[cycle] = mean
            bias[root] = 0.0
            for node in reversed(cycle[1:]):
                bias[node] = step_cost[node] - mean + bias[int(succ[node])]
            for node in cycle:
                state[node] = 2
            tree_part = path[:cut]
        else:
            tree_part = path
        for node in reversed(tree_part):
            gain[node] = gain[int(succ[node])]
            bias[node] = step_cost[node] - gain[node] + bias[int(succ[node])]
            state[node] = 2
    return gain, bias


def howard_min_mean_cycle(
    graph: EdgeGraph, max_iterations: int = 10_000
) -> tuple[float, np.ndarray]:
    """Minimum mean cycle by policy iteration; also returns the final policy.

    Preferred over Karp when n is large enough that the O(n * edges)
    dynamic program dominates; iterations in practice stay far below the
    cap. Ties are broken toward the smallest offset index so reruns are
    bit-for-bit identical.
    """
    _validate_graph(graph)
    n = graph.n_nodes
    rows = np.arange(n)
    scale = 1.0 + float(np.abs(graph.costs).max())
    tol = 1e-13 * scale
    policy = np.asarray(graph.costs.argmin(axis=1), dtype=np.int64)
    for _ in range(max_iterations):
        gain, bias = _policy_values(graph, policy)
        head_gain = gain[graph.heads]
        best_gain = head_gain.min(axis=1)
        new_policy = policy.copy()
        gain_improves = best_gain < gain - tol
        if np.any(gain_improves):
            new_policy[gain_improves] = head_gain[gain_improves].argmin(axis=1)
        else:
            # second stage: improve bias among gain-tied edges
            q = graph.costs - gain[:, None] + bias[graph.heads]
            q = np.where(head_gain <= gain[:, None] + tol, q, np.inf)
            best_q = q.min(axis=1)
            bias_improves = best_q < bias - tol
            if not np.any(bias_improves):
                return float(gain.min()), policy
            new_policy[bias_improves] = q[bias_improves].argmin(axis=1)
        policy = new_policy
    raise SolverError(f"policy iteration did not settle in {max_iterations} rounds")


def min_mean_cycle(graph: EdgeGraph, method: str = "karp") -> float:
    if method == "karp":
        return karp_min_mean_cycle(graph)
    if method == "howard":
        value, _ = howard_min_mean_cycle(graph)
        return value
    raise ConfigError(f"unknown eigenvalue method {method!r}, expected karp or howard")


def _relax_to_fixpoint(
    start: np.ndarray,
    tails: np.ndarray,
    cost_in: np.ndarray,
    accept_tol: float,
    fail_tol: float,
    context: str,
) -> np.ndarray:
    """Bellman-Ford sweeps p <- min(p, min_j p[tail] + c') until stable.

    With the eigenvalue subtracted there is no strictly negative cycle, so
    the sweeps stabilize within n rounds up to rounding; residual
    improvements below accept_tol are treated as converged, improvements
    beyond fail_tol after the sweep budget mean the eigenvalue was wrong.
    """
    p = start.copy()
    n = p.shape[0]
    last_delta = np.inf
    for _ in range(n + 8):
        cand = (p[tails] + cost_in).min(axis=1)
        new = np.minimum(p, cand)
        with np.errstate(invalid="ignore"):
            delta = p - new  # inf - inf on still-unreached nodes
        delta = np.where(np.isnan(delta), 0.0, delta)
        finite = delta[np.isfinite(delta)]
        last_delta = float(finite.max()) if finite.size else 0.0
        became_finite = bool(np.any(np.isinf(p) & np.isfinite(new)))
        p = new
        if last_delta <= accept_tol and not became_finite:
            return p
    if last_delta > fail_tol:
        raise SolverError(
            f"{context}: potentials kept improving by {last_delta:.3e} after the "
            f"sweep budget; the eigenvalue is inconsistent with the costs"
        )
    return p


def _tight_components(graph: EdgeGraph, slack: np.ndarray, tol: float):
    """Strong components of the tight subgraph and which ones carry a cycle."""
    n = graph.n_nodes
    xs, js = np.nonzero(slack <= tol)
    ys = graph.heads[xs, js]
    adjacency = csr_matrix(
        (np.ones(xs.shape[0], dtype=np.int8), (xs, ys)), shape=(n, n)
    )
    n_comp, labels = connected_components(
        adjacency, directed=True, connection="strong"
    )
    internal = labels[xs] == labels[ys]
    cyclic = np.zeros(n_comp, dtype=bool)
    if np.any(internal):
        cyclic[np.unique(labels[xs[internal]])] = True
    return labels, cyclic


def solve_weak_kam(
    graph: EdgeGraph,
    method: str = "karp",
    tight_tol: float | None = None,
) -> WeakKamSolution:
    """Full eigenpair: eigenvalue, potential, critical nodes, residual.

    tight_tol is the slack threshold below which an edge counts as tight;
    it defaults to 1e-9 * (1 + |eigenvalue|).
    """
    _validate_graph(graph)
    lam = min_mean_cycle(graph, method=method)
    if tight_tol is None:
        tight_tol = 1e-9 * (1.0 + abs(lam))
    tails, cost_in = graph.incoming
    reduced_in = cost_in - lam
    scale = 1.0 + float(np.abs(graph.costs).max()) + abs(lam)
    accept_tol = 1e-13 * scale
    fail_tol = 1e-8 * scale

    p = _relax_to_fixpoint(
        np.zeros(graph.n_nodes), tails, reduced_in, accept_tol, fail_tol,
        "virtual-source potentials",
    )
    slack = p[:, None] + (graph.costs - lam) - p[graph.heads]
    labels, cyclic = _tight_components(graph, slack, tight_tol)
    critical_mask = cyclic[labels]
    critical_nodes = np.nonzero(critical_mask)[0]
    if critical_nodes.size == 0:
        raise SolverError(
            "no critical cycle found at the tight threshold; the eigenvalue "
            "and the cost table disagree"
        )

    start = np.where(critical_mask, 0.0, np.inf)
    u = _relax_to_fixpoint(
        start, tails, reduced_in, accept_tol, fail_tol, "critical-source potential"
    )
    if np.any(np.isinf(u)):
        n_bad = int(np.count_nonzero(np.isinf(u)))
        raise SolverError(
            f"{n_bad} nodes are unreachable from the critical set; no finite "
            f"solution exists (is the stencil wide enough to move?)"
        )
    u -= u.min()

    solution = WeakKamSolution(
        tau=graph.tau,
        eigenvalue=lam,
        ergodic_rate=lam / graph.tau,
        potential=u,
        residual=0.0,
        critical_nodes=critical_nodes,
        n_critical_components=int(np.count_nonzero(cyclic)),
        method=method,
    )
    solution.residual = lax_oleinik_residual(solution, graph)
    return solution


def lax_oleinik_residual(solution: WeakKamSolution, graph: EdgeGraph) -> float:
    """Max over nodes of |min in-edge (u + c) - u - eigenvalue|."""
    tails, cost_in = graph.incoming
    u = solution.potential
    applied = (u[tails] + cost_in).min(axis=1)
    return float(np.abs(applied - u - solution.eigenvalue).max())


@dataclass
class CalibratedConfiguration:
    """A backward orbit of argmin predecessors.

    nodes runs backward in time: nodes[0] is the start x_0 and nodes[k] is
    x_{-k}. Step k joins nodes[k+1] to nodes[k] along stencil offset
    step_offsets[k], with velocity step_velocities[k] and a calibration
    defect defects[k] = u(tail) + c - u(head) - eigenvalue >= 0 up to the
    solver residual.
    """

    tau: float
    nodes: np.ndarray
    step_offsets: np.ndarray
    step_velocities: np.ndarray
    defects: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.step_offsets.shape[0]


def backward_calibrated_configuration(
    solution: WeakKamSolution,
    graph: EdgeGraph,
    start_node: int,
    n_steps: int,
) -> CalibratedConfiguration:
    """Descend argmin predecessors of the potential for n_steps steps.

    Ties at the minimum break toward the smallest tail node index, then
    the smallest offset index, so the configuration is reproducible.
    """
    if n_steps < 1:
        raise ConfigError(f"need at least one step, got {n_steps}")
    if not 0 <= start_node < graph.n_nodes:
        raise DomainError(f"start node {start_node} outside 0..{graph.n_nodes - 1}")
    tails, cost_in = graph.incoming
    u = solution.potential
    lam = solution.eigenvalue
    nodes = np.empty(n_steps + 1, dtype=np.int64)
    offs = np.empty(n_steps, dtype=np.int64)
    defects = np.empty(n_steps)
    nodes[0] = start_node
    current = int(start_node)
    for k in range(n_steps):
        values = u[tails[current]] + cost_in[current]
        best = values.min()
        candidates = np.nonzero(values == best)[0]
        if candidates.size > 1:
            tie_tails = tails[current][candidates]
            order = np.lexsort((candidates, tie_tails))
            choice = int(candidates[order[0]])
        else:
            choice = int(candidates[0])
        predecessor = int(tails[current, choice])
        defects[k] = float(best - u[current] - lam)
        offs[k] = choice
        nodes[k + 1] = predecessor
        current = predecessor
    return CalibratedConfiguration(
        tau=graph.tau,
        nodes=nodes,
        step_offsets=offs,
        step_velocities=graph.velocities[offs],
        defects=defects,
    )


@dataclass(frozen=True)
class SpeedCheck:
    max_speed: float
    bound: float
    within_bound: bool


def velocity_check(config: CalibratedConfiguration, bound: VelocityBound) -> SpeedCheck:
    """Largest step speed of a configuration against a velocity bound."""
    speeds = np.linalg.norm(config.step_velocities, axis=1)
    top = float(speeds.max()) if speeds.size else 0.0
    return SpeedCheck(max_speed=top, bound=bound.max_speed, within_bound=bool(top <= bound.max_speed))
