"""Uniform torus grids and the one-step edge graph.

Nodes are the points of a uniform N^d grid on the torus, indexed
lexicographically. Edges are labelled by integer offset vectors o with
|o| * h <= tau * D, where h = 1/N is the spacing and D a velocity bound;
the edge (node, o) goes from x to x + o*h (mod 1) and carries the one-step
action cost tau * L(x, o*h/tau). The cost depends only on (node, offset),
so the whole graph is stored as dense (n_nodes, n_offsets) tables.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .torus import minimal_displacement

__all__ = [
    "TorusGrid",
    "build_grid",
    "EdgeGraph",
    "build_edge_graph",
    "stencil_offsets",
    "VelocityBound",
    "velocity_bound",
    "load_or_build_edge_graph",
    "export_costs_csv",
    "minimal_displacement",
]

MAX_EDGES_DEFAULT = 100_000_000


@dataclass(frozen=True)
class TorusGrid:
    """Uniform N^d grid on the torus with lexicographic node indexing."""

    dim: int
    nodes_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.nodes_per_axis < 2:
            raise ConfigError(
                f"grid needs at least 2 nodes per axis, got {self.nodes_per_axis}"
            )

    @property
    def spacing(self) -> float:
        return 1.0 / self.nodes_per_axis

    @property
    def n_nodes(self) -> int:
        return self.nodes_per_axis**self.dim

    def multi_index(self, indices) -> np.ndarray:
        """Lexicographic flat index -> multi index, batched."""
        indices = np.asarray(indices)
        n = self.nodes_per_axis
        if self.dim == 1:
            return indices[..., None]
        return np.stack([indices // n, indices % n], axis=-1)

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi) % self.nodes_per_axis
        if self.dim == 1:
            return multi[..., 0]
        return multi[..., 0] * self.nodes_per_axis + multi[..., 1]

    def coordinates(self, indices) -> np.ndarray:
        """Coordinates in [0, 1)^d of the given flat node indices."""
        return self.multi_index(indices) * self.spacing

    def all_coordinates(self) -> np.ndarray:
        return self.coordinates(np.arange(self.n_nodes))

    def nearest_node(self, x) -> np.ndarray:
        """Flat index of the nearest grid node, batched over leading axes."""
        x = np.asarray(x, dtype=float)
        multi = np.rint(x / self.spacing).astype(np.int64) % self.nodes_per_axis
        return self.flat_index(multi)

    def shifted_indices(self, offset) -> np.ndarray:
        """Head node index for every node under one integer offset vector."""
        offset = np.asarray(offset, dtype=np.int64)
        multi = self.multi_index(np.arange(self.n_nodes))
        return self.flat_index(multi + offset)


def build_grid(dim: int, nodes_per_axis: int) -> TorusGrid:
    return TorusGrid(dim=dim, nodes_per_axis=nodes_per_axis)


@dataclass(frozen=True)
class VelocityBound:
    """A speed cap for stencil construction, with its derivation trail.

    provenance is "user" for a supplied cap and "derived" when it comes from
    a coarse pre-solve: max_speed = safety * (|ergodic rate| + |C(K+1)|)
    where K is the coarse solution's Lipschitz estimate and C(K+1) the
    sampled superlinearity offset at slope K+1.
    """

    max_speed: float
    provenance: str = "user"
    ergodic_rate_coarse: float | None = None
    lipschitz_estimate: float | None = None
    superlinearity_offset: float | None = None
    safety: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.max_speed) or self.max_speed <= 0:
            raise ConfigError(f"velocity bound must be positive, got {self.max_speed}")
        if self.provenance not in ("user", "derived"):
            raise ConfigError(f"unknown provenance {self.provenance!r}")


def velocity_bound(
    model,
    tau: float,
    coarse_solution=None,
    coarse_graph=None,
    safety: float = 1.5,
    coarse_nodes_per_axis: int = 16,
) -> VelocityBound:
    """Derive a speed cap from a coarse solve of the same model.

    Minimizing velocities of calibrated configurations are bounded by the
    ergodic rate plus the superlinearity offset at slope K+1, K a Lipschitz
    bound for the solution. Both are estimated from a coarse grid and
    inflated by the safety factor. Pass a precomputed (solution, graph)
    pair to skip the internal pre-solve.
    """
    if safety <= 0:
        raise ConfigError(f"safety factor must be positive, got {safety}")
    if tau <= 0:
        raise DomainError(f"time step must be positive, got {tau}")
    from . import model as model_mod
    from .solver import solve_weak_kam

    if coarse_solution is None or coarse_graph is None:
        bootstrap = _bootstrap_speed(model, model_mod)
        grid = TorusGrid(model.dim, coarse_nodes_per_axis)
        coarse_graph = build_edge_graph(
            grid, model, tau, VelocityBound(bootstrap, "user")
        )
        coarse_solution = solve_weak_kam(coarse_graph)

    grid = coarse_graph.grid
    u = coarse_solution.potential
    k_lip = 0.0
    for axis in range(grid.dim):
        offset = np.zeros(grid.dim, dtype=np.int64)
        offset[axis] = 1
        shifted = grid.shifted_indices(offset)
        k_lip = max(k_lip, float(np.abs(u[shifted] - u).max()) / grid.spacing)
    consts = model_mod.superlinearity_constants(
        model, slope=k_lip + 1.0, search_radius=max(2.0 * (k_lip + 1.0) + 4.0, 8.0)
    )
    speed = safety * (abs(coarse_solution.ergodic_rate) + abs(consts.offset))
    return VelocityBound(
        max_speed=max(speed, 1e-6),
        provenance="derived",
        ergodic_rate_coarse=coarse_solution.ergodic_rate,
        lipschitz_estimate=k_lip,
        superlinearity_offset=consts.offset,
        safety=safety,
    )


def _bootstrap_speed(model, model_mod) -> float:
    """A-priori speed cap for the coarse pre-solve.

    The ergodic rate sits between the sampled min of L on a velocity box
    (radius 8) and min_x L(x, 0), so its magnitude is bounded by the larger
    of the two; adding |C(2)| bounds the coarse minimizing velocities.
    """
    d = model.dim
    n_pos = 512 if d == 1 else 48
    xs = np.linspace(0.0, 1.0, n_pos, endpoint=False)
    x_grid = np.stack(np.meshgrid(*([xs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    rest = float(model.lagrangian(x_grid, np.zeros(d)).min())
    consts_low = model_mod.superlinearity_constants(model, slope=1.0, search_radius=8.0)
    # L - |v| >= offset, so inf L >= offset on the sampled box
    rate_bound = max(abs(rest), abs(consts_low.offset))
    consts = model_mod.superlinearity_constants(model, slope=2.0, search_radius=8.0)
    return 1.05 * (rate_bound + abs(consts.offset)) + 0.5


def stencil_offsets(grid: TorusGrid, tau: float, bound: VelocityBound) -> np.ndarray:
    """Integer offsets o with |o| * h <= tau * max_speed, in lexicographic order.

    Contains 0 always; symmetric under negation by construction. A stencil
    of {0} only (tau * max_speed < h) is legal but almost certainly means
    the time step or bound is too small for the grid, hence the warning.
    """
    if tau <= 0:
        raise DomainError(f"time step must be positive, got {tau}")
    h = grid.spacing
    reach = tau * bound.max_speed / h
    k_max = int(np.floor(reach + 1e-9))
    if k_max == 0:
        warnings.warn(
            f"stencil is {{0}} only: tau * max_speed = {tau * bound.max_speed:.3g} "
            f"< spacing {h:.3g}; the dynamics cannot leave a node",
            stacklevel=2,
        )
        return np.zeros((1, grid.dim), dtype=np.int64)
    ranges = [range(-k_max, k_max + 1)] * grid.dim
    offsets = np.array(list(product(*ranges)), dtype=np.int64)
    lengths = np.linalg.norm(offsets.astype(float), axis=1)
    keep = lengths <= reach + 1e-9
    return offsets[keep]


@dataclass
class EdgeGraph:
    """Dense one-step edge graph over a torus grid.

    costs[i, j] is the action of the edge from node i along offset j and
    heads[i, j] its head node. velocities[j] = offsets[j] * h / tau is the
    phase velocity every edge with offset j represents.
    """

    grid: TorusGrid
    tau: float
    offsets: np.ndarray
    costs: np.ndarray
    heads: np.ndarray
    bound: VelocityBound | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.costs.shape[0]

    @property
    def n_offsets(self) -> int:
        return self.costs.shape[1]

    @property
    def n_edges(self) -> int:
        return self.costs.size

    @cached_property
    def velocities(self) -> np.ndarray:
        return self.offsets * self.grid.spacing / self.tau

    @cached_property
    def incoming(self) -> tuple[np.ndarray, np.ndarray]:
        """(tails, cost_in): tails[y, j] is the tail of the offset-j edge
        into y, and cost_in[y, j] that edge's cost."""
        n, s = self.costs.shape
        tails = np.empty((n, s), dtype=np.int64)
        rows = np.arange(n)
        for j in range(s):
            tails[self.heads[:, j], j] = rows
        cost_in = self.costs[tails, np.arange(s)[None, :]]
        return tails, cost_in

    def edge_list(self) -> tuple[np.ndarray, np.ndarray]:
        """(tails, heads) flat arrays in (node, offset) row-major order."""
        n, s = self.costs.shape
        tails = np.repeat(np.arange(n), s)
        return tails, self.heads.reshape(-1)


def build_edge_graph(
    grid: TorusGrid,
    model,
    tau: float,
    bound: VelocityBound,
    max_edges: int = MAX_EDGES_DEFAULT,
) -> EdgeGraph:
    """Assemble the cost and head tables for (grid, model, tau, bound)."""
    offsets = stencil_offsets(grid, tau, bound)
    n, s = grid.n_nodes, offsets.shape[0]
    if n * s > max_edges:
        suggested = int(np.sqrt(max_edges / max(s, 1))) if grid.dim == 2 else max_edges // s
        raise ConfigError(
            f"edge table would hold {n * s:.3g} entries (> {max_edges:.3g}); "
            f"reduce the grid to roughly {suggested} nodes per axis, the "
            f"velocity bound, or the time step"
        )
    coords = grid.all_coordinates()
    costs = np.empty((n, s))
    heads = np.empty((n, s), dtype=np.int64)
    velocities = offsets * grid.spacing / tau
    for j in range(s):
        costs[:, j] = tau * model.lagrangian(coords, velocities[j])
        heads[:, j] = grid.shifted_indices(offsets[j])
    if not np.all(np.isfinite(costs)):
        bad = int(np.count_nonzero(~np.isfinite(costs)))
        raise DataError(f"{bad} edge costs are not finite")
    return EdgeGraph(grid=grid, tau=tau, offsets=offsets, costs=costs, heads=heads, bound=bound)


def _cache_key(grid: TorusGrid, fingerprint, tau: float, bound: VelocityBound) -> str:
    blob = repr((fingerprint, grid.dim, grid.nodes_per_axis, float(tau), float(bound.max_speed)))
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def load_or_build_edge_graph(
    grid: TorusGrid,
    model,
    tau: float,
    bound: VelocityBound,
    cache_dir: str | Path | None = None,
    max_edges: int = MAX_EDGES_DEFAULT,
) -> EdgeGraph:
    """build_edge_graph with an optional on-disk cache.

    Only models with a stable fingerprint (separable form) are cacheable;
    generic callback models always rebuild.
    """
    fingerprint = model.fingerprint()
    if cache_dir is None or fingerprint is None:
        return build_edge_graph(grid, model, tau, bound, max_edges)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"edges-{_cache_key(grid, fingerprint, tau, bound)}.npz"
    if path.exists():
        with np.load(path) as data:
            return EdgeGraph(
                grid=grid,
                tau=float(data["tau"]),
                offsets=data["offsets"],
                costs=data["costs"],
                heads=data["heads"],
                bound=bound,
            )
    graph = build_edge_graph(grid, model, tau, bound, max_edges)
    np.savez_compressed(
        path, tau=graph.tau, offsets=graph.offsets, costs=graph.costs, heads=graph.heads
    )
    return graph


def export_costs_csv(graph: EdgeGraph, path: str | Path, max_nodes: int = 10_000) -> None:
    """Dump the cost table as CSV rows (node, offset..., cost); small graphs only."""
    if graph.n_nodes > max_nodes:
        raise ConfigError(
            f"cost export is limited to {max_nodes} nodes, graph has {graph.n_nodes}"
        )
    lines = ["node," + ",".join(f"o{k}" for k in range(graph.grid.dim)) + ",cost"]
    for i in range(graph.n_nodes):
        for j in range(graph.n_offsets):
            off = ",".join(str(int(c)) for c in graph.offsets[j])
            lines.append(f"{i},{off},{graph.costs[i, j]!r}")
    Path(path).write_text("\n".join(lines) + "\n")
