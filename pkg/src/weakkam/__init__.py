"""Semi-discrete weak KAM machinery on the flat torus.

Solves the one-step optimality equation for a time-discretized Tonelli
Lagrangian on a uniform torus grid and extracts the objects of its
ergodic optimization structure: the discrete ergodic rate, weak KAM
potentials, minimizing holonomic edge measures, the discrete Mather and
Aubry sets, the one-step Lagrangian flow against a reference integrator,
and refinement sweeps with set-convergence diagnostics.
"""

__version__ = "0.1.0"

from .aubry import (
    AubryWitness,
    CalibrationGraph,
    DefectField,
    aubry_set,
    aubry_witness,
    calibration_graph,
    defect_field,
    nearby_aubry_distance,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FlowError,
    SolverError,
    WeakKamError,
)
from .flow import (
    PhaseState,
    calibrated_curve_residual,
    continuous_flow_reference,
    continuous_orbit,
    discrete_el_step,
    discrete_orbit,
    pseudo_orbit_defect,
)
from .graph import (
    EdgeGraph,
    TorusGrid,
    VelocityBound,
    build_edge_graph,
    build_grid,
    export_costs_csv,
    load_or_build_edge_graph,
    minimal_displacement,
    stencil_offsets,
    velocity_bound,
)
from .mather import (
    EdgeMeasure,
    PhaseSet,
    RecoveryResult,
    cesaro_measure,
    discrete_action_of_measure,
    holonomy_defect,
    mather_set,
    optimal_edge_measure,
    penalized_mather,
    phase_distance,
    phase_distance_matrix,
    recovery_measure,
)
from .model import (
    FerromagneticReport,
    GenericLagrangian,
    SeparableLagrangian,
    SuperlinearityConstants,
    TrigPolynomial,
    check_ferromagnetic,
    discrete_action,
    energy,
    eval_gradients,
    eval_lagrangian,
    finite_difference_gradients,
    mechanical_model,
    superlinearity_constants,
)
from .solver import (
    CalibratedConfiguration,
    SpeedCheck,
    WeakKamSolution,
    backward_calibrated_configuration,
    howard_min_mean_cycle,
    karp_min_mean_cycle,
    lax_oleinik_residual,
    min_mean_cycle,
    solve_weak_kam,
    velocity_check,
)
from .sweep import (
    KuratowskiReport,
    ReferenceSet,
    SweepPlan,
    SweepReport,
    hausdorff_excess,
    kuratowski_report,
    tau_sweep,
)
