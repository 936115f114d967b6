"""Refinement sweeps in tau and set-convergence diagnostics.

A sweep solves the eigenproblem along a strictly decreasing list of time
steps with the grid spacing coupled to tau (h = min(c_h tau^2, tau D / 4)),
extracts Mather and Aubry sets at the solver-scale tolerance
epsilon(tau) = 10 residual + 1e-9 (a plan may override the rule), and
tracks the four one-sided Hausdorff excesses against a reference set. The
Kuratowski report turns those columns into verdicts: excesses from the
discrete sets to the reference trending to zero support upper convergence
(no spurious limit points), the reverse direction supports lower
convergence (nothing escapes the limit).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aubry import aubry_set, calibration_graph, defect_field
from .errors import ConfigError, DomainError
from .graph import TorusGrid, VelocityBound, build_edge_graph, velocity_bound
from .mather import PhaseSet, mather_set, phase_distance_matrix
from .solver import solve_weak_kam
from .torus import minimal_displacement

__all__ = [
    "ReferenceSet",
    "hausdorff_excess",
    "SweepPlan",
    "SweepRow",
    "SweepReport",
    "tau_sweep",
    "KuratowskiColumn",
    "KuratowskiReport",
    "kuratowski_report",
]


@dataclass
class ReferenceSet:
    """An analytic limit set: explicit phase points or a full zero section.

    alpha_h is the reference ergodic constant (the discrete rate should
    approach its negative). The zero-section kind stands for the whole
    torus carrying velocity zero; excesses from it to a finite set are
    evaluated on a sampled section of recorded resolution.
    """

    kind: str
    alpha_h: float
    positions: np.ndarray | None = None
    velocities: np.ndarray | None = None
    section_resolution: int = 2048

    def __post_init__(self):
        if self.kind not in ("points", "zero-section"):
            raise ConfigError(f"unknown reference kind {self.kind!r}")
        if self.kind == "points":
            if self.positions is None or len(self.positions) == 0:
                raise ConfigError("a points reference needs at least one point")
            self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
            if self.velocities is None:
                self.velocities = np.zeros_like(self.positions)
            else:
                self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
            if self.velocities.shape != self.positions.shape:
                raise ConfigError("reference positions and velocities differ in shape")

    @classmethod
    def zero_section(cls, alpha_h: float = 0.0) -> "ReferenceSet":
        return cls(kind="zero-section", alpha_h=alpha_h)

    @classmethod
    def from_points(cls, positions, alpha_h: float, velocities=None) -> "ReferenceSet":
        return cls(
            kind="points", alpha_h=alpha_h, positions=positions, velocities=velocities
        )

    @classmethod
    def potential_maxima(cls, model, resolution: int = 4096) -> "ReferenceSet":
        """Maxima of the potential, refined parabolically, velocity zero.

        Convenience for separable models whose limit sets are the resting
        maximizers; alpha_h is the maximum value itself.
        """
        if model.dim != 1:
            raise ConfigError("automatic maxima extraction is one-dimensional only")
        xs = np.linspace(0.0, 1.0, resolution, endpoint=False)
        values = model.potential.value(xs[:, None])
        top = values.max()
        step = 1.0 / resolution
        keep = []
        for i in np.nonzero(values >= top - 1e-9)[0]:
            left, mid, right = values[(i - 1) % resolution], values[i], values[(i + 1) % resolution]
            denom = left - 2 * mid + right
            shift = 0.0 if denom == 0 else 0.5 * (left - right) / denom
            keep.append((xs[i] + shift * step) % 1.0)
        points = _dedupe_points(np.array(keep), tol=2 * step)
        return cls(
            kind="points",
            alpha_h=float(top),
            positions=points[:, None],
            velocities=np.zeros((points.shape[0], 1)),
        )

    def excess_discrete_to_reference(self, phase: PhaseSet) -> float:
        """max over discrete points of distance to this set (exact)."""
        if phase.n_points == 0:
            raise DomainError("discrete set is empty")
        if self.kind == "zero-section":
            return float(np.linalg.norm(phase.velocities, axis=1).max())
        ref = PhaseSet(self.positions, self.velocities, "reference")
        return float(phase_distance_matrix(phase, ref).min(axis=1).max())

    def excess_reference_to_discrete(self, phase: PhaseSet) -> float:
        """sup over this set of distance to the discrete points.

        Exact for the points kind; the zero section is sampled at
        section_resolution points per axis.
        """
        if phase.n_points == 0:
            raise DomainError("discrete set is empty")
        if self.kind == "points":
            ref = PhaseSet(self.positions, self.velocities, "reference")
            return float(phase_distance_matrix(ref, phase).min(axis=1).max())
        dim = phase.positions.shape[1]
        m = self.section_resolution if dim == 1 else 128
        axes = [np.linspace(0.0, 1.0, m, endpoint=False)] * dim
        section = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        dx = minimal_displacement(section[:, None, :], phase.positions[None, :, :])
        dists = np.linalg.norm(dx, axis=-1) + np.linalg.norm(phase.velocities, axis=1)[None, :]
        return float(dists.min(axis=1).max())


def _dedupe_points(points: np.ndarray, tol: float) -> np.ndarray:
    points = np.sort(points % 1.0)
    keep = [points[0]]
    for p in points[1:]:
        if min(abs(p - keep[-1]), 1 - abs(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1:
        wrap = min(abs(keep[0] + 1.0 - keep[-1]), abs(keep[0] - keep[-1]))
        if wrap <= tol:
            keep.pop()
    return np.array(keep)


def hausdorff_excess(set_a: PhaseSet, set_b: PhaseSet) -> float:
    """One-sided excess e(A -> B) = max over A of min over B of phase distance."""
    if set_a.n_points == 0 or set_b.n_points == 0:
        raise DomainError("Hausdorff excess needs nonempty sets")
    return float(phase_distance_matrix(set_a, set_b).min(axis=1).max())


@dataclass
class SweepPlan:
    """What to solve at each tau and against which reference."""

    model: object
    taus: list[float]
    reference: ReferenceSet
    bound: VelocityBound | None = None
    h_coupling: float = 1.0
    method: str = "karp"
    threads: int = 1
    epsilon_rule: object | None = None  # callable (tau, h, residual) -> epsilon

    def __post_init__(self):
        taus = [float(t) for t in self.taus]
        if any(t <= 0 for t in taus):
            raise ConfigError(f"time steps must be positive, got {taus}")
        if any(b >= a for a, b in zip(taus, taus[1:])):
            raise ConfigError(f"time steps must decrease strictly, got {taus}")
        if self.h_coupling <= 0:
            raise ConfigError(f"h coupling must be positive, got {self.h_coupling}")
        self.taus = taus


@dataclass
class SweepRow:
    tau: float
    nodes_per_axis: int
    epsilon: float
    ergodic_rate: float
    rate_error: float
    residual: float
    e_aubry_to_ref: float
    e_ref_to_aubry: float
    e_mather_to_ref: float
    e_ref_to_mather: float
    runtime: float
    error: str | None = None


@dataclass
class SweepReport:
    rows: list[SweepRow]
    reference: ReferenceSet
    bound: VelocityBound
    plan: SweepPlan = field(repr=False)

    CSV_COLUMNS = (
        "tau",
        "nodes_per_axis",
        "epsilon",
        "ergodic_rate",
        "rate_error",
        "residual",
        "e_aubry_to_ref",
        "e_ref_to_aubry",
        "e_mather_to_ref",
        "e_ref_to_mather",
    )

    def valid_rows(self) -> list[SweepRow]:
        return [row for row in self.rows if row.error is None]

    def csv_lines(self) -> list[str]:
        """Deterministic data columns; runtimes are deliberately excluded
        so identical configurations reproduce identical bytes."""
        lines = [",".join(self.CSV_COLUMNS)]
        for row in self.rows:
            if row.error is not None:
                lines.append(f"{row.tau!r},{row.nodes_per_axis}," + ",".join(["nan"] * 8))
                continue
            values = [f"{row.tau!r}", str(row.nodes_per_axis)] + [
                repr(getattr(row, name)) for name in self.CSV_COLUMNS[2:]
            ]
            lines.append(",".join(values))
        return lines


def _grid_for(tau: float, coupling: float, bound: VelocityBound, dim: int) -> TorusGrid:
    h_target = min(coupling * tau * tau, tau * bound.max_speed / 4.0)
    # the small relief keeps 1/h at an exact integer from rounding up
    n = max(2, int(np.ceil(1.0 / h_target - 1e-9)))
    return TorusGrid(dim, n)


def _sweep_row(plan: SweepPlan, bound: VelocityBound, tau: float) -> SweepRow:
    begin = time.perf_counter()
    grid = _grid_for(tau, plan.h_coupling, bound, plan.model.dim)
    try:
        graph = build_edge_graph(grid, plan.model, tau, bound)
        solution = solve_weak_kam(graph, method=plan.method)
        h = grid.spacing
        if plan.epsilon_rule is not None:
            epsilon = float(plan.epsilon_rule(tau, h, solution.residual))
        else:
            # Solver-scale tolerance, the same default the Aubry module
            # uses. A grid-scale tolerance (adding h instead of 1e-9)
            # admits every edge whose kinetic action fits under h, which
            # near a nondegenerate maximizer is a velocity fan of width
            # ~ sqrt(h/tau); the extracted sets would then stall at that
            # width instead of contracting with the grid.
            epsilon = 10.0 * solution.residual + 1e-9
        defects = defect_field(graph, solution)
        aubry = aubry_set(calibration_graph(defects, epsilon))
        mather = mather_set(graph, solution, epsilon)
        reference = plan.reference
        row = SweepRow(
            tau=tau,
            nodes_per_axis=grid.nodes_per_axis,
            epsilon=epsilon,
            ergodic_rate=solution.ergodic_rate,
            rate_error=abs(solution.ergodic_rate + reference.alpha_h),
            residual=solution.residual,
            e_aubry_to_ref=reference.excess_discrete_to_reference(aubry),
            e_ref_to_aubry=reference.excess_reference_to_discrete(aubry),
            e_mather_to_ref=reference.excess_discrete_to_reference(mather),
            e_ref_to_mather=reference.excess_reference_to_discrete(mather),
            runtime=time.perf_counter() - begin,
        )
    except Exception as exc:  # noqa: BLE001 - rows fail independently
        return SweepRow(
            tau=tau,
            nodes_per_axis=grid.nodes_per_axis,
            epsilon=float("nan"),
            ergodic_rate=float("nan"),
            rate_error=float("nan"),
            residual=float("nan"),
            e_aubry_to_ref=float("nan"),
            e_ref_to_aubry=float("nan"),
            e_mather_to_ref=float("nan"),
            e_ref_to_mather=float("nan"),
            runtime=time.perf_counter() - begin,
            error=f"{type(exc).__name__}: {exc}",
        )
    return row


def tau_sweep(plan: SweepPlan) -> SweepReport:
    """Solve every row of the plan; failures are recorded, not raised.

    Rows are independent; with threads > 1 they run concurrently and are
    merged back in tau order, so the report does not depend on the thread
    count.
    """
    bound = plan.bound
    if bound is None:
        bound = velocity_bound(plan.model, plan.taus[0])
    if plan.threads > 1:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            rows = list(pool.map(lambda t: _sweep_row(plan, bound, t), plan.taus))
    else:
        rows = [_sweep_row(plan, bound, tau) for tau in plan.taus]
    return SweepReport(rows=rows, reference=plan.reference, bound=bound, plan=plan)


@dataclass
class KuratowskiColumn:
    """Trend summary of one excess column over the sweep rows."""

    name: str
    values: list[float]
    monotone_within_band: bool
    last_value: float
    loglog_slope: float | None
    trending_to_zero: bool


@dataclass
class KuratowskiReport:
    columns: dict[str, KuratowskiColumn]
    upper_convergence_consistent: bool
    lower_convergence_consistent: bool
    n_rows: int

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "upper_convergence_consistent": self.upper_convergence_consistent,
            "lower_convergence_consistent": self.lower_convergence_consistent,
            "columns": {
                name: {
                    "values": col.values,
                    "monotone_within_band": col.monotone_within_band,
                    "last_value": col.last_value,
                    "loglog_slope": col.loglog_slope,
                    "trending_to_zero": col.trending_to_zero,
                }
                for name, col in self.columns.items()
            },
        }


NOISE_BAND = 1.2
ZERO_FLOOR = 1e-9


def _column_summary(name: str, taus, values) -> KuratowskiColumn:
    values = [float(v) for v in values]
    monotone = all(
        b <= NOISE_BAND * a + 1e-15 for a, b in zip(values, values[1:])
    )
    positive = [(t, v) for t, v in zip(taus, values) if v > 1e-14]
    if len(positive) >= 2:
        log_t = np.log([t for t, _ in positive])
        log_v = np.log([v for _, v in positive])
        slope = float(np.polyfit(log_t, log_v, 1)[0])
    else:
        slope = None
    last = values[-1]
    trending = monotone and (last <= max(0.5 * values[0], ZERO_FLOOR))
    return KuratowskiColumn(
        name=name,
        values=values,
        monotone_within_band=monotone,
        last_value=last,
        loglog_slope=slope,
        trending_to_zero=trending,
    )


def kuratowski_report(report: SweepReport) -> KuratowskiReport:
    """Convergence verdicts from the four excess columns.

    Requires at least three valid rows. Upper convergence (discrete sets
    produce no spurious limit points) is supported when both excesses from
    the discrete sets to the reference trend to zero; lower convergence
    (the reference is exhausted) when the reverse excesses do.
    """
    rows = report.valid_rows()
    if len(rows) < 3:
        raise ConfigError(
            f"need at least 3 valid sweep rows for convergence verdicts, have {len(rows)}"
        )
    taus = [row.tau for row in rows]
    columns = {}
    for name in ("e_aubry_to_ref", "e_ref_to_aubry", "e_mather_to_ref", "e_ref_to_mather"):
        columns[name] = _column_summary(name, taus, [getattr(r, name) for r in rows])
    upper = (
        columns["e_aubry_to_ref"].trending_to_zero
        and columns["e_mather_to_ref"].trending_to_zero
    )
    lower = (
        columns["e_ref_to_aubry"].trending_to_zero
        and columns["e_ref_to_mather"].trending_to_zero
    )
    return KuratowskiReport(
        columns=columns,
        upper_convergence_consistent=upper,
        lower_convergence_consistent=lower,
        n_rows=len(rows),
    )
