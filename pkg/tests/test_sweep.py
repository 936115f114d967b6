import numpy as np
import pytest

import weakkam as wk
from weakkam import ConfigError, DomainError


def _phase(points, tau=0.1):
    pts = np.asarray(points, dtype=float)
    return wk.PhaseSet(
        positions=pts[:, :1], velocities=pts[:, 1:], kind="test", tau=tau
    )


def test_hausdorff_excess_examples():
    a = _phase([[0.0, 0.0]])
    b = _phase([[0.0, 0.0], [0.4, 0.0]])
    assert wk.hausdorff_excess(a, b) == pytest.approx(0.0, abs=0.0)
    assert wk.hausdorff_excess(b, a) == pytest.approx(0.4, abs=1e-15)


def test_hausdorff_excess_wraps_around():
    a = _phase([[0.9, 0.0]])
    b = _phase([[0.1, 0.0]])
    assert wk.hausdorff_excess(a, b) == pytest.approx(0.2, abs=1e-15)


def test_hausdorff_excess_identity_and_monotonicity():
    a = _phase([[0.2, 0.5], [0.7, -0.3]])
    assert wk.hausdorff_excess(a, a) == 0.0
    bigger = _phase([[0.2, 0.5], [0.7, -0.3], [0.5, 1.0]])
    assert wk.hausdorff_excess(a, bigger) <= wk.hausdorff_excess(a, _phase([[0.5, 1.0]]))


def test_hausdorff_excess_empty_rejected():
    empty = _phase(np.zeros((0, 2)))
    a = _phase([[0.0, 0.0]])
    with pytest.raises(DomainError):
        wk.hausdorff_excess(empty, a)
    with pytest.raises(DomainError):
        wk.hausdorff_excess(a, empty)


def test_zero_section_reference(free_solved):
    graph, sol = free_solved
    phase = wk.mather_set(graph, sol, 1e-9)
    ref = wk.ReferenceSet.zero_section()
    assert ref.excess_discrete_to_reference(phase) == pytest.approx(0.0, abs=1e-12)
    # the grid is a 1/16 net of the section, so the reverse excess is at
    # most half a cell
    assert ref.excess_reference_to_discrete(phase) <= 0.5 / 16 + 1e-12


def test_potential_maxima_double_well(double_well):
    ref = wk.ReferenceSet.potential_maxima(double_well)
    assert sorted(ref.positions.ravel().tolist()) == pytest.approx(
        [0.0, 0.5], abs=1e-9
    )
    assert np.all(ref.velocities == 0.0)


def test_potential_maxima_shifted_peak(shifted_pendulum):
    ref = wk.ReferenceSet.potential_maxima(shifted_pendulum)
    # V(x) = cos(2 pi x - 2) peaks where 2 pi x = 2
    assert ref.positions.ravel().tolist() == pytest.approx(
        [1.0 / np.pi], abs=1e-6
    )


def test_reference_from_points():
    ref = wk.ReferenceSet.from_points([[0.25]], alpha_h=1.0)
    assert ref.positions.ravel().tolist() == [0.25]
    assert np.all(ref.velocities == 0.0)


def test_sweep_plan_validation(pendulum):
    ref = wk.ReferenceSet.potential_maxima(pendulum)
    with pytest.raises(ConfigError):
        wk.SweepPlan(model=pendulum, taus=[0.1, 0.2, 0.05], reference=ref)
    with pytest.raises(ConfigError):
        wk.SweepPlan(model=pendulum, taus=[0.2, 0.1, 0.05], reference=ref,
                     h_coupling=0.0)
    with pytest.raises(ConfigError):
        wk.SweepPlan(model=pendulum, taus=[0.2, -0.1, 0.05], reference=ref)


@pytest.fixture(scope="module")
def pendulum_sweep_report(request):
    pendulum = wk.mechanical_model([[1.0]], [(1.0, [1], 0.0)])
    plan = wk.SweepPlan(
        model=pendulum,
        taus=[0.2, 0.1, 0.05],
        reference=wk.ReferenceSet.potential_maxima(pendulum),
        bound=wk.VelocityBound(2.0, "user"),
    )
    return wk.tau_sweep(plan)


def test_sweep_rows_on_grid_maximum(pendulum_sweep_report):
    report = pendulum_sweep_report
    assert len(report.rows) == 3
    for row in report.rows:
        assert row.error is None
        # the maximum of -V sits on a grid node, so the rest loop is exact
        assert row.rate_error <= 1e-12
        assert row.residual <= 1e-9
        assert row.e_aubry_to_ref <= 0.5 / row.nodes_per_axis + 1e-12
        assert row.e_mather_to_ref <= row.e_aubry_to_ref + 1e-15


def test_sweep_csv_shape(pendulum_sweep_report):
    lines = pendulum_sweep_report.csv_lines()
    assert lines[0].startswith("tau,")
    assert len(lines) == 1 + len(pendulum_sweep_report.rows)
    assert "runtime" not in lines[0]


def test_sweep_free_model_hits_zero_section(free_model):
    plan = wk.SweepPlan(
        model=free_model,
        taus=[0.4, 0.2, 0.1],
        reference=wk.ReferenceSet.zero_section(),
        bound=wk.VelocityBound(1.0, "user"),
    )
    report = wk.tau_sweep(plan)
    for row in report.rows:
        assert row.error is None
        assert row.e_mather_to_ref == pytest.approx(0.0, abs=1e-12)
        assert row.e_aubry_to_ref == pytest.approx(0.0, abs=1e-12)
        assert row.rate_error <= 1e-12
    kur = wk.kuratowski_report(report)
    assert kur.upper_convergence_consistent


def test_sweep_threads_do_not_change_results(pendulum):
    ref = wk.ReferenceSet.potential_maxima(pendulum)
    bound = wk.VelocityBound(2.0, "user")
    seq = wk.tau_sweep(
        wk.SweepPlan(model=pendulum, taus=[0.2, 0.1, 0.05], reference=ref,
                     bound=bound, threads=1)
    )
    par = wk.tau_sweep(
        wk.SweepPlan(model=pendulum, taus=[0.2, 0.1, 0.05], reference=ref,
                     bound=bound, threads=4)
    )
    assert seq.csv_lines() == par.csv_lines()


def test_sweep_records_row_failure(pendulum):
    ref = wk.ReferenceSet.potential_maxima(pendulum)
    plan = wk.SweepPlan(
        model=pendulum,
        taus=[0.2, 0.1, 1e-5],
        reference=ref,
        bound=wk.VelocityBound(2.0, "user"),
    )
    report = wk.tau_sweep(plan)
    assert report.rows[0].error is None
    assert report.rows[1].error is None
    # the last grid would need ~1e10 nodes; the row records the failure
    # and the sweep still completes
    assert report.rows[2].error is not None
    assert len(report.valid_rows()) == 2


def test_sweep_off_grid_rate_error_scales(shifted_pendulum):
    plan = wk.SweepPlan(
        model=shifted_pendulum,
        taus=[0.2, 0.1, 0.05],
        reference=wk.ReferenceSet.potential_maxima(shifted_pendulum),
        bound=wk.VelocityBound(2.5, "user"),
    )
    report = wk.tau_sweep(plan)
    for row in report.rows:
        h = 1.0 / row.nodes_per_axis
        # the peak is off-grid; the best rest loop misses it by at most
        # h/2, and -V is smooth, so the rate error is O(h^2)
        assert row.rate_error <= 5.0 * h**2


def test_kuratowski_report_structure(pendulum_sweep_report):
    kur = wk.kuratowski_report(pendulum_sweep_report)
    assert kur.n_rows == 3
    assert set(kur.columns) == {
        "e_aubry_to_ref",
        "e_ref_to_aubry",
        "e_mather_to_ref",
        "e_ref_to_mather",
    }
    for column in kur.columns.values():
        assert len(column.values) == 3
        assert column.last_value == column.values[-1]
    assert kur.upper_convergence_consistent
    assert kur.lower_convergence_consistent


def test_kuratowski_needs_three_rows(pendulum):
    ref = wk.ReferenceSet.potential_maxima(pendulum)
    plan = wk.SweepPlan(
        model=pendulum,
        taus=[0.2, 0.1, 1e-5],
        reference=ref,
        bound=wk.VelocityBound(2.0, "user"),
    )
    report = wk.tau_sweep(plan)
    assert len(report.valid_rows()) == 2
    with pytest.raises(ConfigError):
        wk.kuratowski_report(report)
