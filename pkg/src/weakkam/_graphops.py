"""Reachability and cycle helpers on masked edge subgraphs.

A mask is a boolean (n_nodes, n_offsets) array selecting a subgraph of an
EdgeGraph. These helpers are shared by the Mather and Aubry extraction:
strong components, which components carry a cycle, reachability to and
from those components, and a deterministic cycle walk inside one.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import SolverError
from .graph import EdgeGraph


def masked_adjacency(graph: EdgeGraph, mask: np.ndarray) -> csr_matrix:
    xs, js = np.nonzero(mask)
    ys = graph.heads[xs, js]
    return csr_matrix(
        (np.ones(xs.shape[0], dtype=np.int8), (xs, ys)),
        shape=(graph.n_nodes, graph.n_nodes),
    )


def strong_components(graph: EdgeGraph, mask: np.ndarray):
    """(labels, cyclic_component_flags) of the masked subgraph.

    A component is cyclic when it contains at least one masked edge with
    both ends inside it (single nodes need a self-loop).
    """
    adjacency = masked_adjacency(graph, mask)
    n_comp, labels = connected_components(adjacency, directed=True, connection="strong")
    xs, js = np.nonzero(mask)
    ys = graph.heads[xs, js]
    internal = labels[xs] == labels[ys]
    cyclic = np.zeros(n_comp, dtype=bool)
    if np.any(internal):
        cyclic[np.unique(labels[xs[internal]])] = True
    return labels, cyclic


def reaches(graph: EdgeGraph, mask: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Nodes with a masked path (possibly empty) into the target set."""
    adjacency = masked_adjacency(graph, mask)
    good = targets.copy()
    while True:
        grown = good | (adjacency @ good > 0)
        if np.array_equal(grown, good):
            return good
        good = grown


def reachable_from(graph: EdgeGraph, mask: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Nodes with a masked path (possibly empty) out of the source set."""
    adjacency = masked_adjacency(graph, mask)
    good = sources.copy()
    while True:
        grown = good | (adjacency.T @ good > 0)
        if np.array_equal(grown, good):
            return good
        good = grown


def component_cycle(
    graph: EdgeGraph, mask: np.ndarray, labels: np.ndarray, component: int
) -> tuple[list[int], list[int]]:
    """One cycle of masked edges inside a cyclic component.

    Walks from the smallest node of the component, preferring a self-loop,
    otherwise the smallest masked offset staying inside the component; the
    walk must close within the component or the component was not cyclic.
    Returns (cycle nodes, offset index per step).
    """
    members = np.nonzero(labels == component)[0]
    start = int(members.min())
    inside = labels == component
    path_nodes = [start]
    path_offsets: list[int] = []
    seen = {start: 0}
    current = start
    for _ in range(members.size + 1):
        choices = np.nonzero(mask[current] & inside[graph.heads[current]])[0]
        if choices.size == 0:
            raise SolverError(
                f"component {component} has no internal edge from node {current}; "
                f"it should not have been classified cyclic"
            )
        self_loops = choices[graph.heads[current, choices] == current]
        pick = int(self_loops[0]) if self_loops.size else int(choices[0])
        head = int(graph.heads[current, pick])
        path_offsets.append(pick)
        if head in seen:
            cut = seen[head]
            return path_nodes[cut:], path_offsets[cut:]
        seen[head] = len(path_nodes)
        path_nodes.append(head)
        current = head
    raise SolverError(f"cycle walk in component {component} failed to close")
