import dataclasses
import warnings

import numpy as np
import pytest

import weakkam as wk
from weakkam import DomainError, SolverError

from .oracles import bi_infinite_edges, random_edge_graph


def test_defect_field_free_is_kinetic_action(free_solved):
    graph, sol = free_solved
    defects = wk.defect_field(graph, sol)
    h = graph.grid.spacing
    tau = graph.tau
    for j, offset in enumerate(graph.offsets):
        speed2 = float(np.sum((offset * h / tau) ** 2))
        expected = tau * 0.5 * speed2
        assert defects.defects[:, j] == pytest.approx(
            np.full(graph.costs.shape[0], expected), abs=1e-15
        )
    zero_col = next(j for j, o in enumerate(graph.offsets) if not np.any(o))
    assert np.all(defects.defects[:, zero_col] == 0.0)


def test_defect_field_pendulum_rest_loop(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    zero_col = next(j for j, o in enumerate(graph.offsets) if not np.any(o))
    assert defects.defects[0, zero_col] == pytest.approx(0.0, abs=1e-12)
    assert defects.defects.min() >= -1e-9
    assert defects.eigenvalue == sol.eigenvalue


def test_defect_field_matches_configuration_defects(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    cfg = wk.backward_calibrated_configuration(sol, graph, 23, 15)
    for k in range(15):
        tail = cfg.nodes[k + 1]
        col = cfg.step_offsets[k]
        assert defects.defects[tail, col] == pytest.approx(
            cfg.defects[k], abs=1e-12
        )


def test_defect_field_rejects_tampered_potential(pendulum_solved):
    graph, sol = pendulum_solved
    u = sol.potential.copy()
    u[5] += 0.1
    tampered = dataclasses.replace(sol, potential=u)
    with pytest.raises(SolverError):
        wk.defect_field(graph, tampered)


def test_calibration_graph_free_keeps_self_loops(free_solved):
    graph, sol = free_solved
    defects = wk.defect_field(graph, sol)
    cal = wk.calibration_graph(defects, 0.0)
    zero_col = next(j for j, o in enumerate(graph.offsets) if not np.any(o))
    expected = np.zeros_like(cal.mask)
    expected[:, zero_col] = True
    assert np.array_equal(cal.mask, expected)


def test_calibration_graph_epsilon_infinity_keeps_all(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    cal = wk.calibration_graph(defects, np.inf)
    assert cal.mask.all()


def test_calibration_masks_nest(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    previous = None
    for eps in (0.0, 1e-6, 1e-3, 1e-1, np.inf):
        mask = wk.calibration_graph(defects, eps).mask
        if previous is not None:
            assert np.all(previous <= mask)
        previous = mask


def test_aubry_set_free(free_solved):
    graph, sol = free_solved
    n = graph.costs.shape[0]
    cal = wk.calibration_graph(wk.defect_field(graph, sol), 1e-9)
    phase = wk.aubry_set(cal)
    assert phase.kind == "aubry"
    assert len(phase.positions) == n
    assert np.all(phase.velocities == 0.0)


def test_aubry_set_pendulum_matches_boolean_dp(pendulum):
    grid = wk.build_grid(1, 16)
    graph = wk.build_edge_graph(grid, pendulum, 0.1, wk.VelocityBound(2.0, "user"))
    sol = wk.solve_weak_kam(graph)
    cal = wk.calibration_graph(wk.defect_field(graph, sol), 1e-9)
    phase = wk.aubry_set(cal)
    assert phase.positions.ravel().tolist() == [0.0]
    assert phase.velocities.ravel().tolist() == [0.0]
    got = set(zip(phase.nodes.tolist(), phase.offset_indices.tolist()))
    assert got == bi_infinite_edges(cal.mask, graph.heads)


@pytest.mark.filterwarnings("ignore:calibration graph has no cycle")
def test_aubry_matches_boolean_dp_on_random_graphs(rng):
    for _ in range(40):
        graph = random_edge_graph(rng, connected=True)
        sol = wk.solve_weak_kam(graph)
        defects = wk.defect_field(graph, sol)
        for eps in (0.0, 1e-6, 0.05, 0.5):
            cal = wk.calibration_graph(defects, eps)
            phase = wk.aubry_set(cal)
            got = set(zip(phase.nodes.tolist(), phase.offset_indices.tolist()))
            assert got == bi_infinite_edges(cal.mask, graph.heads)


@pytest.mark.filterwarnings("ignore:calibration graph has no cycle")
def test_aubry_sets_nest_in_epsilon(rng):
    for _ in range(20):
        graph = random_edge_graph(rng, connected=True)
        sol = wk.solve_weak_kam(graph)
        defects = wk.defect_field(graph, sol)
        previous = None
        for eps in (0.0, 1e-3, 0.1, 1.0):
            phase = wk.aubry_set(wk.calibration_graph(defects, eps))
            edges = set(zip(phase.nodes.tolist(), phase.offset_indices.tolist()))
            if previous is not None:
                assert previous <= edges
            previous = edges


def test_hand_mask_drops_dangling_edge(pendulum_solved):
    from .oracles import make_edge_graph

    graph = make_edge_graph([[1.0, 2.0], [3.0, 4.0]], offsets=[[0], [1]])
    mask = np.array([[True, True], [False, False]])
    cal = wk.CalibrationGraph(graph=graph, mask=mask, epsilon=0.1)
    phase = wk.aubry_set(cal)
    got = set(zip(phase.nodes.tolist(), phase.offset_indices.tolist()))
    # the edge 0 -> 1 is retained by the mask but node 1 never drains
    assert got == {(0, 0)}


def test_empty_calibration_warns(pendulum_solved):
    from .oracles import make_edge_graph

    graph = make_edge_graph([[1.0, 2.0], [3.0, 4.0]], offsets=[[0], [1]])
    mask = np.zeros((2, 2), dtype=bool)
    cal = wk.CalibrationGraph(graph=graph, mask=mask, epsilon=0.0)
    with pytest.warns(UserWarning):
        phase = wk.aubry_set(cal)
    assert len(phase.positions) == 0


def test_witness_certifies_membership(pendulum):
    grid = wk.build_grid(1, 32)
    graph = wk.build_edge_graph(grid, pendulum, 0.1, wk.VelocityBound(2.0, "user"))
    sol = wk.solve_weak_kam(graph)
    defects = wk.defect_field(graph, sol)
    cal = wk.calibration_graph(defects, 1e-3)
    phase = wk.aubry_set(cal)
    assert len(phase.nodes) >= 1
    for node, col in zip(phase.nodes.tolist(), phase.offset_indices.tolist()):
        witness = wk.aubry_witness(cal, node, col)
        assert witness.node == node and witness.offset_index == col
        # every certificate edge is retained and the pieces chain up
        for nodes_list, off_list, closes in (
            (witness.backward_cycle, witness.backward_cycle_offsets, True),
            (witness.path_in, witness.path_in_offsets, False),
            (witness.path_out, witness.path_out_offsets, False),
            (witness.forward_cycle, witness.forward_cycle_offsets, True),
        ):
            assert len(nodes_list) == len(off_list) + (0 if closes else 1)
            for k, j in enumerate(off_list):
                tail = nodes_list[k]
                head = nodes_list[(k + 1) % len(nodes_list)]
                assert cal.mask[tail, j]
                assert graph.heads[tail, j] == head
        # the in-path ends at the witness edge tail, the out-path starts
        # at its head
        assert witness.path_in[-1] == node
        assert witness.path_out[0] == graph.heads[node, col]


def test_witness_rejects_unretained_edge(pendulum_solved):
    graph, sol = pendulum_solved
    cal = wk.calibration_graph(wk.defect_field(graph, sol), 1e-9)
    dropped = np.argwhere(~cal.mask)
    node, col = map(int, dropped[0])
    with pytest.raises(DomainError):
        wk.aubry_witness(cal, node, col)


def test_nearby_distance_at_aubry_point(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    aubry = wk.aubry_set(wk.calibration_graph(defects, 1e-9))
    positions = np.zeros((8, 1))
    velocities = np.zeros((8, 1))
    eta, dist = wk.nearby_aubry_distance(positions, velocities, defects, aubry)
    assert -1e-9 <= eta <= 1e-12
    assert dist == 0.0


def test_nearby_distance_grows_with_offset(pendulum_solved):
    graph, sol = pendulum_solved
    defects = wk.defect_field(graph, sol)
    aubry = wk.aubry_set(wk.calibration_graph(defects, 1e-9))
    dists = []
    for x0 in (0.0, 0.01, 0.02, 0.04, 0.08):
        positions = np.full((8, 1), x0)
        velocities = np.zeros((8, 1))
        eta, dist = wk.nearby_aubry_distance(positions, velocities, defects, aubry)
        assert eta <= defects.defects.max() + 1e-12
        dists.append(dist)
    assert all(a <= b + 1e-12 for a, b in zip(dists, dists[1:]))
    assert dists[0] == 0.0
    assert dists[-1] == pytest.approx(0.08, abs=1e-12)
