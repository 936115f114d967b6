"""End-to-end acceptance checks.

Ten criteria, one test each, every test printing a single
"[criterion N] PASS/FAIL" line to the terminal (bypassing capture) with
the measured numbers. Tolerances are asserted exactly as stated; where a
criterion carries a runtime budget the wall clock is asserted too.
"""

import time

import numpy as np
import pytest

import weakkam as wk

from .oracles import (
    bi_infinite_edges,
    brute_min_mean,
    holonomic_mixture,
    make_edge_graph,
    random_edge_graph,
)


@pytest.fixture
def announce(capsys):
    def _report(criterion, failures, detail=""):
        ok = not failures
        status = "PASS" if ok else "FAIL"
        tail = detail if ok else "; ".join(failures)
        with capsys.disabled():
            print(f"[criterion {criterion}] {status}" + (f" ({tail})" if tail else ""))
        assert ok, f"criterion {criterion}: " + "; ".join(failures)

    return _report


def _solve(model, n, tau, max_speed):
    grid = wk.build_grid(1, n)
    bound = wk.VelocityBound(max_speed, "user")
    graph = wk.build_edge_graph(grid, model, tau, bound)
    return graph, wk.solve_weak_kam(graph)


def test_criterion_1_free_model_exact(announce, free_model):
    begin = time.perf_counter()
    failures = []
    graph, sol = _solve(free_model, 64, 0.1, 2.0)
    if abs(sol.ergodic_rate) > 1e-12:
        failures.append(f"bar_L = {sol.ergodic_rate:.3e} not 0")
    if np.max(np.abs(sol.potential)) > 0.0:
        failures.append("u is not identically zero")
    if sol.residual > 1e-12:
        failures.append(f"residual {sol.residual:.3e} > 1e-12")
    elapsed = time.perf_counter() - begin
    if elapsed >= 1.0:
        failures.append(f"runtime {elapsed:.2f}s >= 1s")
    announce(1, failures, f"bar_L=0, residual={sol.residual:.1e}, {elapsed:.2f}s")


def test_criterion_2_pendulum_ergodic_constant(announce, pendulum):
    begin = time.perf_counter()
    failures = []
    rates = []
    for tau in (0.2, 0.1, 0.05):
        _, sol = _solve(pendulum, 64, tau, 2.0)
        rates.append(sol.ergodic_rate)
        if abs(sol.ergodic_rate + 1.0) > 1e-12:
            failures.append(f"tau={tau}: bar_L = {sol.ergodic_rate!r}")
    # exhaustive cycle enumeration confirms lambda = -tau on a small grid
    oracle_graph = wk.build_edge_graph(
        wk.build_grid(1, 8), pendulum, 0.2, wk.VelocityBound(1.0, "user")
    )
    lam_brute = brute_min_mean(oracle_graph)
    lam_karp = wk.karp_min_mean_cycle(oracle_graph)
    if abs(lam_brute + 0.2) > 1e-12 or abs(lam_karp - lam_brute) > 1e-12:
        failures.append(f"N=8 oracle: brute {lam_brute!r}, karp {lam_karp!r}")
    elapsed = time.perf_counter() - begin
    if elapsed >= 5.0:
        failures.append(f"runtime {elapsed:.2f}s >= 5s")
    announce(
        2,
        failures,
        f"bar_L = -1 at tau = 0.2/0.1/0.05, N=8 oracle ok, {elapsed:.2f}s",
    )


def test_criterion_3_mather_aubry_exact(announce, pendulum):
    failures = []
    graph, sol = _solve(pendulum, 128, 0.05, 2.0)
    mather = wk.mather_set(graph, sol, 1e-9)
    cal = wk.calibration_graph(wk.defect_field(graph, sol), 1e-9)
    aubry = wk.aubry_set(cal)
    for name, phase in (("mather", mather), ("aubry", aubry)):
        points = sorted(
            zip(phase.positions.ravel().tolist(), phase.velocities.ravel().tolist())
        )
        if points != [(0.0, 0.0)]:
            failures.append(f"{name} set is {points}, not {{(0,0)}}")
    ref = wk.ReferenceSet.from_points([[0.0]], alpha_h=1.0)
    for name, phase in (("mather", mather), ("aubry", aubry)):
        fwd = ref.excess_discrete_to_reference(phase)
        rev = ref.excess_reference_to_discrete(phase)
        if fwd > 1e-12 or rev > 1e-12:
            failures.append(f"{name} excesses {fwd:.2e}/{rev:.2e} > 1e-12")
    announce(3, failures, "mather = aubry = {(0,0)}, excesses 0")


def test_criterion_4_kuratowski_trend(announce, shifted_pendulum):
    begin = time.perf_counter()
    failures = []
    plan = wk.SweepPlan(
        model=shifted_pendulum,
        taus=[0.2, 0.1, 0.05, 0.025],
        reference=wk.ReferenceSet.potential_maxima(shifted_pendulum),
        bound=wk.VelocityBound(2.5, "user"),
        h_coupling=1.0,
    )
    report = wk.tau_sweep(plan)
    rows = report.rows
    for row in rows:
        if row.error is not None:
            failures.append(f"tau={row.tau}: {row.error}")
    if not failures:
        for name in ("e_aubry_to_ref", "e_mather_to_ref"):
            values = [getattr(row, name) for row in rows]
            for a, b in zip(values, values[1:]):
                if b > 1.2 * a + 1e-15:
                    failures.append(f"{name} increases: {a:.6f} -> {b:.6f}")
            last = rows[-1]
            h = 1.0 / last.nodes_per_axis
            limit = 2.0 * h + 2.0 * h / last.tau
            if values[-1] > limit:
                failures.append(f"{name} final {values[-1]:.6f} > {limit:.6f}")
        kur = wk.kuratowski_report(report)
        if not kur.columns["e_ref_to_aubry"].trending_to_zero:
            failures.append("e_ref_to_aubry is not trending to zero")
    elapsed = time.perf_counter() - begin
    if elapsed >= 120.0:
        failures.append(f"runtime {elapsed:.1f}s >= 120s")
    final = rows[-1].e_aubry_to_ref if rows else float("nan")
    announce(
        4,
        failures,
        f"final e(A->ref) = {final:.6f} <= {0.05125}, {elapsed:.1f}s",
    )


def test_criterion_5_cross_algorithm_oracles(announce):
    begin = time.perf_counter()
    failures = []
    rng = np.random.default_rng(5)
    for trial in range(200):
        graph = random_edge_graph(rng, connected=True)
        lam_brute = brute_min_mean(graph)
        lam_karp = wk.karp_min_mean_cycle(graph)
        lam_howard, _ = wk.howard_min_mean_cycle(graph)
        if abs(lam_karp - lam_brute) > 1e-9 or abs(lam_howard - lam_brute) > 1e-9:
            failures.append(
                f"trial {trial}: karp {lam_karp!r} howard {lam_howard!r} "
                f"brute {lam_brute!r}"
            )
            break
        sol = wk.solve_weak_kam(graph)
        cal = wk.calibration_graph(wk.defect_field(graph, sol), 1e-9)
        phase = wk.aubry_set(cal)
        got = set(zip(phase.nodes.tolist(), phase.offset_indices.tolist()))
        expected = bi_infinite_edges(cal.mask, graph.heads)
        if got != expected:
            failures.append(f"trial {trial}: aubry {sorted(got)} != {sorted(expected)}")
            break
    elapsed = time.perf_counter() - begin
    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.2f}s >= 10s")
    announce(5, failures, f"200 graphs, three algorithms agree, {elapsed:.2f}s")


def test_criterion_6_holonomy_and_action(announce, free_model, pendulum, double_well):
    failures = []
    test_graphs = [
        make_edge_graph([[2.0, 1.0], [50.0, 3.0]], offsets=[[0], [1]]),
        make_edge_graph([[-5.0, 7.0], [9.0, 11.0]], offsets=[[0], [1]]),
        _solve(free_model, 16, 0.1, 2.0)[0],
        _solve(pendulum, 64, 0.1, 2.0)[0],
        _solve(pendulum, 32, 0.2, 1.0)[0],
        _solve(double_well, 64, 0.1, 2.0)[0],
    ]
    rng = np.random.default_rng(6)
    for _ in range(30):
        test_graphs.append(random_edge_graph(rng, connected=True))
    for index, graph in enumerate(test_graphs):
        sol = wk.solve_weak_kam(graph)
        measure = wk.optimal_edge_measure(graph, sol)
        hol = wk.holonomy_defect(measure, graph)
        action = wk.discrete_action_of_measure(graph, measure)
        if hol > 1e-12:
            failures.append(f"graph {index}: holonomy {hol:.2e}")
        if abs(action - sol.eigenvalue) > 1e-9:
            failures.append(
                f"graph {index}: action {action!r} != lambda {sol.eigenvalue!r}"
            )
    checked = 0
    while checked < 100:
        graph = random_edge_graph(rng, connected=True)
        sol = wk.solve_weak_kam(graph)
        mix = holonomic_mixture(rng, graph)
        action = wk.discrete_action_of_measure(graph, mix)
        if action < sol.eigenvalue - 1e-9:
            failures.append(
                f"mixture {checked}: action {action!r} < lambda {sol.eigenvalue!r}"
            )
        checked += 1
    announce(6, failures, f"{len(test_graphs)} graphs + 100 mixtures")


def test_criterion_7_velocity_bound(announce, pendulum):
    failures = []
    tau = 0.1
    bound = wk.velocity_bound(pendulum, tau)
    grid = wk.build_grid(1, 64)
    graph = wk.build_edge_graph(grid, pendulum, tau, bound)
    sol = wk.solve_weak_kam(graph)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        start = int(rng.integers(0, 64))
        cfg = wk.backward_calibrated_configuration(sol, graph, start, 50)
        check = wk.velocity_check(cfg, bound)
        worst = max(worst, check.max_speed)
        if not check.within_bound:
            failures.append(
                f"start {start}: speed {check.max_speed:.3f} > D {bound.max_speed:.3f}"
            )
    announce(
        7,
        failures,
        f"100 configurations, max speed {worst:.3f} <= D = {bound.max_speed:.3f}",
    )


def test_criterion_8_flow_consistency(announce, pendulum, free_model):
    failures = []
    start = wk.PhaseState(np.array([0.25]), np.array([0.0]))
    defects = [
        wk.pseudo_orbit_defect(pendulum, tau, start, 50) for tau in (0.1, 0.05, 0.025)
    ]
    ratios = [a / b for a, b in zip(defects, defects[1:])]
    for ratio in ratios:
        if not (3.6 <= ratio <= 4.4):
            failures.append(f"Richardson ratio {ratio:.3f} outside [3.6, 4.4]")
    free_defect = wk.pseudo_orbit_defect(
        free_model, 0.1, wk.PhaseState(np.array([0.3]), np.array([0.7])), 50
    )
    if free_defect > 1e-12:
        failures.append(f"free-model defect {free_defect:.2e} > 1e-12")
    announce(
        8,
        failures,
        "ratios " + "/".join(f"{r:.3f}" for r in ratios) + f", free {free_defect:.1e}",
    )


def test_criterion_9_penalized_selection(announce, double_well):
    begin = time.perf_counter()
    failures = []
    grid = wk.build_grid(1, 128)
    graph = wk.build_edge_graph(grid, double_well, 0.1, wk.VelocityBound(2.0, "user"))

    def psi(x, v):
        dist = np.minimum(np.abs(x[:, 0] - 0.5), 1.0 - np.abs(x[:, 0] - 0.5))
        return np.exp(-((dist / 0.1) ** 2))

    _, selected = wk.penalized_mather(graph, psi, 1e-3)
    picked = sorted(
        zip(selected.positions.ravel().tolist(), selected.velocities.ravel().tolist())
    )
    if picked != [(0.0, 0.0)]:
        failures.append(f"penalized support {picked} != {{(0,0)}}")
    _, unpenalized = wk.penalized_mather(graph, psi, 0.0)
    both = sorted(
        zip(
            unpenalized.positions.ravel().tolist(),
            unpenalized.velocities.ravel().tolist(),
        )
    )
    if both != [(0.0, 0.0), (0.5, 0.0)]:
        failures.append(f"unpenalized support {both} != {{(0,0),(1/2,0)}}")
    elapsed = time.perf_counter() - begin
    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.2f}s >= 10s")
    announce(9, failures, f"selection picks the unbumped well, {elapsed:.2f}s")


def test_criterion_10_cesaro_measures(announce, pendulum):
    failures = []
    graph, sol = _solve(pendulum, 64, 0.1, 2.0)
    u = sol.potential
    n_steps = 1000
    rng = np.random.default_rng(10)
    for trial in range(50):
        start = int(rng.integers(0, 64))
        cfg = wk.backward_calibrated_configuration(sol, graph, start, n_steps)
        measure = wk.cesaro_measure(cfg, graph)
        hol = wk.holonomy_defect(measure, graph)
        if hol > 2.0 / n_steps:
            failures.append(f"trial {trial}: holonomy {hol:.2e} > 2/N")
        action = wk.discrete_action_of_measure(graph, measure)
        drift = abs(float(u[cfg.nodes[0]] - u[cfg.nodes[-1]])) / n_steps
        if abs(action - sol.eigenvalue) > drift + 1e-9:
            failures.append(
                f"trial {trial}: |action - lambda| = "
                f"{abs(action - sol.eigenvalue):.2e} > {drift + 1e-9:.2e}"
            )
    announce(10, failures, "50 configurations of length 1000")
