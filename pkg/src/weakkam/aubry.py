"""Calibration defects and the discrete Aubry set.

Every edge carries the nonnegative defect

    g(x, o) = u(x) + c(x, o) - u(head) - eigenvalue,

zero exactly on calibrated steps. Thresholding at epsilon gives the
calibration subgraph; the discrete Aubry set collects the edges lying on
bi-infinite paths of that subgraph, which are exactly the edges whose tail
is reachable from a cyclic strong component and whose head reaches one.
Each retained edge is reported as the phase point (tail position, velocity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from warnings import warn

import numpy as np

from . import _graphops
from .errors import DomainError, SolverError
from .graph import EdgeGraph
from .mather import PhaseSet, _phase_set_from_edges, phase_distance
from .solver import WeakKamSolution

__all__ = [
    "DefectField",
    "CalibrationGraph",
    "AubryWitness",
    "defect_field",
    "calibration_graph",
    "aubry_set",
    "aubry_witness",
    "nearby_aubry_distance",
]

DOMINATION_FLOOR = -1e-6


@dataclass
class DefectField:
    """Per-edge calibration defects for one solution on one graph."""

    graph: EdgeGraph = field(repr=False)
    defects: np.ndarray
    tau: float
    eigenvalue: float

    def min_defect_per_node(self) -> np.ndarray:
        """Best outgoing defect of each node; near zero where the
        one-step optimality equation is realized by an out-edge."""
        return self.defects.min(axis=1)


def defect_field(graph: EdgeGraph, solution: WeakKamSolution) -> DefectField:
    """Defects g = u(tail) + c - u(head) - eigenvalue for every edge.

    Domination makes every defect nonnegative; values below a hard floor
    mean the solution does not belong to the graph.
    """
    u = solution.potential
    g = u[:, None] + (graph.costs - solution.eigenvalue) - u[graph.heads]
    worst = float(g.min())
    if worst < DOMINATION_FLOOR:
        raise SolverError(
            f"defect {worst:.3e} below the domination floor {DOMINATION_FLOOR}; "
            f"the potential does not dominate these costs"
        )
    return DefectField(graph=graph, defects=g, tau=graph.tau, eigenvalue=solution.eigenvalue)


@dataclass
class CalibrationGraph:
    """Edges whose defect is at most epsilon, as a mask over the edge table."""

    graph: EdgeGraph = field(repr=False)
    mask: np.ndarray
    epsilon: float


def calibration_graph(defects: DefectField, epsilon: float) -> CalibrationGraph:
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    return CalibrationGraph(
        graph=defects.graph, mask=defects.defects <= epsilon, epsilon=epsilon
    )


def aubry_set(cal: CalibrationGraph) -> PhaseSet:
    """Edges of the calibration graph lying on bi-infinite calibrated paths.

    A calibrated edge survives when its tail can be entered forever (it is
    reachable from a cyclic component) and its head can be left forever
    (it reaches a cyclic component). An empty result, which can only come
    from an acyclic calibration graph, is reported with a warning since a
    correct solution always calibrates its critical cycles.
    """
    graph = cal.graph
    labels, cyclic = _graphops.strong_components(graph, cal.mask)
    if not np.any(cyclic):
        warn("calibration graph has no cycle; the discrete Aubry set is empty", stacklevel=2)
        empty = np.empty(0, dtype=np.int64)
        return _phase_set_from_edges(graph, empty, empty, "aubry", cal.epsilon)
    cyclic_nodes = cyclic[labels]
    fed_forever = _graphops.reachable_from(graph, cal.mask, cyclic_nodes)
    drains_forever = _graphops.reaches(graph, cal.mask, cyclic_nodes)
    xs, js = np.nonzero(cal.mask)
    ys = graph.heads[xs, js]
    keep = fed_forever[xs] & drains_forever[ys]
    return _phase_set_from_edges(graph, xs[keep], js[keep], "aubry", cal.epsilon)


@dataclass
class AubryWitness:
    """A cycle-path-edge-path-cycle certificate that an edge is bi-infinite.

    Concatenating backward_cycle (repeated), path_in, the edge, path_out
    and forward_cycle (repeated) yields a bi-infinite calibrated path
    through the edge. Node lists include endpoints; offset lists give the
    stencil offset of each step.
    """

    node: int
    offset_index: int
    backward_cycle: list[int]
    backward_cycle_offsets: list[int]
    path_in: list[int]
    path_in_offsets: list[int]
    path_out: list[int]
    path_out_offsets: list[int]
    forward_cycle: list[int]
    forward_cycle_offsets: list[int]

    def as_dict(self) -> dict:
        return {
            "node": self.node,
            "offset_index": self.offset_index,
            "backward_cycle": self.backward_cycle,
            "backward_cycle_offsets": self.backward_cycle_offsets,
            "path_in": self.path_in,
            "path_in_offsets": self.path_in_offsets,
            "path_out": self.path_out,
            "path_out_offsets": self.path_out_offsets,
            "forward_cycle": self.forward_cycle,
            "forward_cycle_offsets": self.forward_cycle_offsets,
        }


def _bfs_forward_path(graph, mask, source_mask, target_mask):
    """Shortest forward path over masked edges from a source to a target node.

    Deterministic: frontier nodes expand in index order, offsets in
    stencil order. Returns (node list source..target, offset per step).
    """
    n = graph.n_nodes
    parent = np.full(n, -1, dtype=np.int64)
    parent_off = np.full(n, -1, dtype=np.int64)
    hits = np.nonzero(source_mask & target_mask)[0]
    if hits.size:
        return [int(hits[0])], []
    seen = source_mask.copy()
    frontier = sorted(int(v) for v in np.nonzero(source_mask)[0])
    while frontier:
        next_frontier = []
        for node in frontier:
            for off in np.nonzero(mask[node])[0]:
                nb = int(graph.heads[node, off])
                if seen[nb]:
                    continue
                seen[nb] = True
                parent[nb] = node
                parent_off[nb] = int(off)
                if target_mask[nb]:
                    nodes = [nb]
                    offsets = []
                    while parent[nodes[-1]] >= 0:
                        offsets.append(int(parent_off[nodes[-1]]))
                        nodes.append(int(parent[nodes[-1]]))
                    return nodes[::-1], offsets[::-1]
                next_frontier.append(nb)
        frontier = sorted(next_frontier)
    raise SolverError("no calibrated path found while building a witness")


def _cycle_through(graph, mask, labels, node):
    """A masked cycle through a node of a cyclic component.

    Takes the smallest internal out-offset of the node and closes back to
    it with a breadth-first path inside the component.
    """
    comp = labels[node]
    inside = mask & (labels[:, None] == comp) & (labels[graph.heads] == comp)
    offs = np.nonzero(inside[node])[0]
    if offs.size == 0:
        raise SolverError(f"node {node} has no internal calibrated out-edge")
    first = int(offs[0])
    entry = int(graph.heads[node, first])
    source = np.zeros(graph.n_nodes, dtype=bool)
    source[entry] = True
    target = np.zeros(graph.n_nodes, dtype=bool)
    target[node] = True
    nodes, offsets = _bfs_forward_path(graph, inside, source, target)
    return [int(node)] + nodes[:-1], [first] + offsets


def aubry_witness(cal: CalibrationGraph, node: int, offset_index: int) -> AubryWitness:
    """Explicit bi-infinite certificate for one retained edge.

    Raises when the edge is not calibrated or not on a bi-infinite path.
    """
    graph = cal.graph
    if not cal.mask[node, offset_index]:
        raise DomainError(f"edge ({node}, {offset_index}) is not calibrated")
    labels, cyclic = _graphops.strong_components(graph, cal.mask)
    cyclic_nodes = cyclic[labels]
    head = int(graph.heads[node, offset_index])
    fed = _graphops.reachable_from(graph, cal.mask, cyclic_nodes)
    drains = _graphops.reaches(graph, cal.mask, cyclic_nodes)
    if not (fed[node] and drains[head]):
        raise DomainError(f"edge ({node}, {offset_index}) is not on a bi-infinite path")
    node_mask = np.zeros(graph.n_nodes, dtype=bool)
    node_mask[node] = True
    path_in, in_offs = _bfs_forward_path(graph, cal.mask, cyclic_nodes, node_mask)
    head_mask = np.zeros(graph.n_nodes, dtype=bool)
    head_mask[head] = True
    path_out, out_offs = _bfs_forward_path(graph, cal.mask, head_mask, cyclic_nodes)
    back_nodes, back_offs = _cycle_through(graph, cal.mask, labels, int(path_in[0]))
    fwd_nodes, fwd_offs = _cycle_through(graph, cal.mask, labels, int(path_out[-1]))
    return AubryWitness(
        node=int(node),
        offset_index=int(offset_index),
        backward_cycle=[int(v) for v in back_nodes],
        backward_cycle_offsets=[int(v) for v in back_offs],
        path_in=[int(v) for v in path_in],
        path_in_offsets=[int(v) for v in in_offs],
        path_out=[int(v) for v in path_out],
        path_out_offsets=[int(v) for v in out_offs],
        forward_cycle=[int(v) for v in fwd_nodes],
        forward_cycle_offsets=[int(v) for v in fwd_offs],
    )


def nearby_aubry_distance(
    positions: np.ndarray,
    velocities: np.ndarray,
    defects: DefectField,
    aubry: PhaseSet,
) -> tuple[float, float]:
    """Shadowing diagnostic for a sampled orbit segment.

    Projects every sample onto its nearest edge (nearest node, nearest
    stencil velocity) and reads the largest defect eta along the segment;
    returns (eta, phase distance from the middle sample to the Aubry set).
    """
    graph = defects.graph
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    if positions.shape[0] == 0:
        raise DomainError("orbit segment is empty")
    if aubry.n_points == 0:
        raise DomainError("Aubry set is empty; no distance to measure")
    nodes = graph.grid.nearest_node(positions)
    vel_table = graph.velocities
    diffs = velocities[:, None, :] - vel_table[None, :, :]
    nearest_offsets = np.linalg.norm(diffs, axis=-1).argmin(axis=1)
    eta = float(defects.defects[nodes, nearest_offsets].max())
    mid = positions.shape[0] // 2
    dists = [
        phase_distance(positions[mid], velocities[mid], aubry.positions[i], aubry.velocities[i])
        for i in range(aubry.n_points)
    ]
    return eta, float(min(dists))
