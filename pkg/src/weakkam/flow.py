"""One-step Lagrangian dynamics and the continuous reference flow.

The one-step map sends (x, v) to (y, w) with y = x + tau v (mod 1) and w
solving the discrete stationarity condition

    grad_v L(x, v) + tau grad_x L(y, w) - grad_v L(y, w) = 0.

For the separable form this is the closed formula w = v + tau M^{-1} grad_x
evaluated at y; generic models are solved by damped Newton with a
finite-difference Jacobian. The continuous reference flow integrates the
Euler-Lagrange equation with classic fourth-order Runge-Kutta, accepting a
step size only once halving it moves the result by at most 1e-10. Both
flows feed the pseudo-orbit defect, the per-step distance between the
one-step map and the time-tau flow along a continuous orbit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FlowError
from .mather import phase_distance
from .model import SeparableLagrangian, check_ferromagnetic
from .solver import CalibratedConfiguration, WeakKamSolution
from .torus import wrap_point

__all__ = [
    "PhaseState",
    "discrete_el_step",
    "discrete_orbit",
    "continuous_flow_reference",
    "continuous_orbit",
    "pseudo_orbit_defect",
    "calibrated_curve_residual",
]

RK4_ACCEPT = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class PhaseState:
    """A point of torus x velocity space; positions wrap into [0, 1)^d."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        pos = wrap_point(np.atleast_1d(np.asarray(self.position, dtype=float)))
        vel = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        if pos.shape != vel.shape:
            raise DomainError(
                f"position shape {pos.shape} and velocity shape {vel.shape} differ"
            )
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise DomainError("phase state must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    @property
    def dim(self) -> int:
        return self.position.shape[0]


def _step_residual(model, tau, x, v, y, w):
    return (
        model.grad_v(x, v) + tau * np.asarray(model.grad_x(y, w)) - model.grad_v(y, w)
    )


def discrete_el_step(model, tau: float, state: PhaseState, method: str = "auto") -> PhaseState:
    """One step of the discrete Euler-Lagrange map.

    method "closed" uses the separable formula, "newton" the damped Newton
    solve (also valid for separable models, converging in one iteration),
    "auto" picks by form.
    """
    if tau <= 0:
        raise DomainError(f"time step must be positive, got {tau}")
    x, v = state.position, state.velocity
    y = wrap_point(x + tau * v)
    if method == "auto":
        method = "closed" if isinstance(model, SeparableLagrangian) else "newton"
    if method == "closed":
        if not isinstance(model, SeparableLagrangian):
            raise DomainError("closed-form step needs the separable form")
        w = v + tau * (model.mass_inverse() @ model.grad_x(y, v))
        return PhaseState(y, w)
    if method != "newton":
        raise DomainError(f"unknown step method {method!r}")
    return PhaseState(y, _newton_velocity(model, tau, x, v, y))


def _newton_velocity(model, tau, x, v, y):
    d = x.shape[0]
    w = v.copy()
    residual = _step_residual(model, tau, x, v, y, w)
    norm = float(np.linalg.norm(residual))
    for _ in range(NEWTON_MAX_ITER):
        if norm <= NEWTON_TOL:
            return w
        jac = np.empty((d, d))
        fd = 1e-6 * (1.0 + float(np.linalg.norm(w)))
        for i in range(d):
            e = np.zeros(d)
            e[i] = fd
            jac[:, i] = (
                _step_residual(model, tau, x, v, y, w + e)
                - _step_residual(model, tau, x, v, y, w - e)
            ) / (2 * fd)
        try:
            direction = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError as exc:
            raise FlowError(f"singular Jacobian in the one-step solve: {exc}") from exc
        scale = 1.0
        for _ in range(30):
            trial = w + scale * direction
            trial_res = _step_residual(model, tau, x, v, y, trial)
            trial_norm = float(np.linalg.norm(trial_res))
            if trial_norm < norm:
                w, residual, norm = trial, trial_res, trial_norm
                break
            scale *= 0.5
        else:
            raise FlowError(
                f"one-step Newton stalled at residual {norm:.3e} "
                f"(tolerance {NEWTON_TOL})"
            )
    if norm <= NEWTON_TOL:
        return w
    raise FlowError(
        f"one-step Newton did not reach {NEWTON_TOL} in {NEWTON_MAX_ITER} "
        f"iterations; residual {norm:.3e}"
    )


def _ensure_step_well_posed(model, tau: float, velocity_radius: float) -> None:
    """Cheap sufficient check that one-step solves are well posed.

    A bounded mixed second derivative keeps the implicit step monotone for
    small tau; coupling at the scale of 1/tau or beyond is rejected.
    Separable models have zero coupling and always pass.
    """
    if isinstance(model, SeparableLagrangian):
        return
    report = check_ferromagnetic(
        model,
        velocity_radius=velocity_radius,
        beta_tolerance=np.inf,
        position_resolution=32,
        velocity_resolution=9,
    )
    if report.beta_estimate * tau >= 1.0:
        raise FlowError(
            f"mixed coupling {report.beta_estimate:.3g} is too strong for time "
            f"step {tau}; the one-step map may not be well defined"
        )


def discrete_orbit(model, tau: float, start: PhaseState, n_steps: int, method: str = "auto"):
    """Iterate the one-step map; returns (positions, velocities), n_steps + 1 rows."""
    if n_steps < 0:
        raise DomainError(f"step count must be nonnegative, got {n_steps}")
    _ensure_step_well_posed(model, tau, float(np.linalg.norm(start.velocity)) + 2.0)
    positions = np.empty((n_steps + 1, start.dim))
    velocities = np.empty((n_steps + 1, start.dim))
    state = start
    positions[0], velocities[0] = state.position, state.velocity
    for k in range(1, n_steps + 1):
        state = discrete_el_step(model, tau, state, method=method)
        positions[k], velocities[k] = state.position, state.velocity
    return positions, velocities


def _rk4_integrate(model, x, v, duration, n_substeps):
    """Fixed-step RK4 for x' = v, v' = M^{-1} grad_x L; x unwrapped."""
    mass_inv = model.mass_inverse()

    def acceleration(pos):
        return mass_inv @ model.grad_x(pos % 1.0, None)

    dt = duration / n_substeps
    x = x.copy()
    v = v.copy()
    for _ in range(n_substeps):
        k1x, k1v = v, acceleration(x)
        k2x, k2v = v + 0.5 * dt * k1v, acceleration(x + 0.5 * dt * k1x)
        k3x, k3v = v + 0.5 * dt * k2v, acceleration(x + 0.5 * dt * k2x)
        k4x, k4v = v + dt * k3v, acceleration(x + dt * k3x)
        x = x + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x, v


def continuous_flow_reference(
    model, state: PhaseState, duration: float, initial_dt: float | None = None
) -> PhaseState:
    """Time-duration Euler-Lagrange flow by step-halved RK4.

    The substep count doubles until two consecutive refinements agree to
    1e-10 in phase distance; the finer result is returned. Only separable
    models carry the second-order structure this integrator needs.
    """
    if not isinstance(model, SeparableLagrangian):
        raise FlowError("the reference integrator requires the separable form")
    if duration < 0:
        raise DomainError(f"duration must be nonnegative, got {duration}")
    if duration == 0:
        return state
    if initial_dt is None:
        initial_dt = min(duration, 0.05)
    n_sub = max(1, int(np.ceil(duration / initial_dt)))
    x0, v0 = state.position.astype(float), state.velocity.astype(float)
    x_prev, v_prev = _rk4_integrate(model, x0, v0, duration, n_sub)
    for _ in range(24):
        n_sub *= 2
        x_next, v_next = _rk4_integrate(model, x0, v0, duration, n_sub)
        gap = phase_distance(x_prev % 1.0, v_prev, x_next % 1.0, v_next)
        x_prev, v_prev = x_next, v_next
        if gap <= RK4_ACCEPT:
            return PhaseState(x_prev % 1.0, v_prev)
    raise FlowError(
        f"reference integrator failed to reach {RK4_ACCEPT} over duration "
        f"{duration}; last refinement moved by {gap:.3e}"
    )


def continuous_orbit(model, start: PhaseState, tau: float, n_steps: int):
    """Reference flow sampled at times k * tau, k = 0..n_steps.

    Each hop restarts the step-halving acceptance from the previous
    accepted sample. Returns (positions, velocities).
    """
    if tau <= 0:
        raise DomainError(f"time step must be positive, got {tau}")
    positions = np.empty((n_steps + 1, start.dim))
    velocities = np.empty((n_steps + 1, start.dim))
    state = start
    positions[0], velocities[0] = state.position, state.velocity
    for k in range(1, n_steps + 1):
        state = continuous_flow_reference(model, state, tau)
        positions[k], velocities[k] = state.position, state.velocity
    return positions, velocities


def pseudo_orbit_defect(model, tau: float, start: PhaseState, n_steps: int) -> float:
    """Largest one-step shadowing gap along a continuous orbit.

    Samples zeta_k of the continuous flow at times k tau are compared with
    one application of the one-step map: the defect is
    max over k of phase distance(one-step(zeta_k), zeta_{k+1}).
    """
    if n_steps < 1:
        raise DomainError(f"need at least one step, got {n_steps}")
    positions, velocities = continuous_orbit(model, start, tau, n_steps)
    worst = 0.0
    for k in range(n_steps):
        stepped = discrete_el_step(model, tau, PhaseState(positions[k], velocities[k]))
        gap = phase_distance(
            stepped.position, stepped.velocity, positions[k + 1], velocities[k + 1]
        )
        worst = max(worst, gap)
    return worst


def calibrated_curve_residual(
    config: CalibratedConfiguration,
    graph,
    solution: WeakKamSolution,
    alpha_reference: float,
) -> float:
    """Mismatch of the calibration identity against a reference constant.

    For a configuration calibrated at rate -alpha the potential increments
    satisfy u(x_0) - u(x_{-n}) = sum of step actions + n tau alpha; the
    returned residual is the absolute mismatch with alpha_reference in
    place of alpha. It vanishes (up to solver residual) exactly when the
    discrete ergodic rate equals -alpha_reference.
    """
    u = solution.potential
    actions = graph.costs[config.nodes[1:], config.step_offsets]
    total = float(actions.sum())
    increment = float(u[config.nodes[0]] - u[config.nodes[-1]])
    n = config.n_steps
    return abs(increment - (total + n * config.tau * alpha_reference))
