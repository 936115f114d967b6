"""Tonelli Lagrangians on the flat torus and the one-step discrete action.

Two concrete forms are supported. The separable (mechanical) form

    L(x, v) = (1/2) v^T M v - V(x)

with a symmetric positive definite mass matrix M and a trigonometric
polynomial potential V has exact analytic derivatives. The generic form
wraps user callbacks for L, grad_x L, grad_v L and the mixed second
derivative d2L/dxdv; callbacks must broadcast over leading axes of x and v.

The one-step discrete action at time step tau is

    A_tau(x, y) = tau * L(x, (y - x) / tau)

with y - x taken as the minimal torus representative in [-1/2, 1/2)^d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError
from .torus import minimal_displacement, wrap_point

TWO_PI = 2.0 * np.pi


class TrigPolynomial:
    """Real trigonometric polynomial V(x) = sum_k a_k cos(2 pi f_k . x + p_k).

    Parameters
    ----------
    dim : int
        Torus dimension d.
    terms : sequence of (amplitude, frequency, phase)
        Frequencies are integer vectors of length d; a scalar frequency is
        accepted when d = 1. Phases are radians and default to 0 when a
        two-element term is given.
    """

    def __init__(self, dim: int, terms):
        if dim < 1:
            raise DomainError(f"potential dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        amps, freqs, phases = [], [], []
        for term in terms:
            if len(term) == 2:
                amp, freq = term
                phase = 0.0
            else:
                amp, freq, phase = term
            freq = np.atleast_1d(np.asarray(freq))
            if freq.shape != (self.dim,):
                raise DomainError(
                    f"frequency {freq} has shape {freq.shape}, expected ({self.dim},)"
                )
            if not np.all(freq == np.round(freq)):
                raise DomainError(f"frequencies must be integer vectors, got {freq}")
            amps.append(float(amp))
            freqs.append(freq.astype(np.int64))
            phases.append(float(phase))
        # no terms means V identically zero (the free Lagrangian)
        self.amplitudes = np.array(amps, dtype=float)
        self.frequencies = (
            np.array(freqs, dtype=np.int64)
            if freqs
            else np.zeros((0, self.dim), dtype=np.int64)
        )
        self.phases = np.array(phases, dtype=float)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        angles = TWO_PI * (x @ self.frequencies.T.astype(float)) + self.phases
        return np.cos(angles) @ self.amplitudes

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        angles = TWO_PI * (x @ self.frequencies.T.astype(float)) + self.phases
        weights = -TWO_PI * self.amplitudes * np.sin(angles)
        return weights @ self.frequencies.astype(float)

    def fingerprint(self) -> tuple:
        return (
            "trig",
            self.dim,
            self.amplitudes.tobytes(),
            self.frequencies.tobytes(),
            self.phases.tobytes(),
        )


class SeparableLagrangian:
    """Mechanical Lagrangian (1/2) v^T M v - V(x) with exact derivatives."""

    form = "separable"

    def __init__(self, mass, potential: TrigPolynomial):
        mass = np.atleast_2d(np.asarray(mass, dtype=float))
        if mass.shape[0] != mass.shape[1]:
            raise DataError(f"mass matrix must be square, got shape {mass.shape}")
        if not np.allclose(mass, mass.T, atol=1e-12):
            raise DataError("mass matrix must be symmetric")
        if np.linalg.eigvalsh(mass).min() <= 0:
            raise DataError("mass matrix must be positive definite")
        if mass.shape[0] != potential.dim:
            raise DataError(
                f"mass matrix is {mass.shape[0]}d but potential is {potential.dim}d"
            )
        self.mass = mass
        self.potential = potential
        self.dim = potential.dim
        self._mass_inv = np.linalg.inv(mass)

    def lagrangian(self, x, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        kinetic = 0.5 * np.einsum("...i,ij,...j->...", v, self.mass, v)
        return kinetic - self.potential.value(x)

    def grad_x(self, x, v) -> np.ndarray:
        del v
        return -self.potential.gradient(x)

    def grad_v(self, x, v) -> np.ndarray:
        del x
        return np.asarray(v, dtype=float) @ self.mass

    def mixed_second(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.dim, self.dim)
        return np.zeros(shape)

    def mass_inverse(self) -> np.ndarray:
        return self._mass_inv

    def fingerprint(self) -> tuple | None:
        return ("separable", self.mass.tobytes(), self.potential.fingerprint())


class GenericLagrangian:
    """Lagrangian given by callbacks; derivatives are taken on faith.

    mixed_second is optional and only needed by the ferromagnetic check.
    """

    form = "generic"

    def __init__(self, dim: int, lagrangian, grad_x, grad_v, mixed_second=None):
        if dim < 1:
            raise DomainError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self._lagrangian = lagrangian
        self._grad_x = grad_x
        self._grad_v = grad_v
        self._mixed = mixed_second

    def lagrangian(self, x, v):
        return np.asarray(self._lagrangian(np.asarray(x, float), np.asarray(v, float)))

    def grad_x(self, x, v):
        return np.asarray(self._grad_x(np.asarray(x, float), np.asarray(v, float)))

    def grad_v(self, x, v):
        return np.asarray(self._grad_v(np.asarray(x, float), np.asarray(v, float)))

    def mixed_second(self, x, v):
        if self._mixed is None:
            raise DomainError("generic model has no mixed second derivative callback")
        return np.asarray(self._mixed(np.asarray(x, float), np.asarray(v, float)))

    def fingerprint(self) -> tuple | None:
        return None


def _as_point(z, dim: int, name: str) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (dim,):
        raise DomainError(f"{name} must have shape ({dim},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DomainError(f"{name} must be finite, got {z}")
    return z


def eval_lagrangian(model, x, v) -> float:
    """Evaluate L at a single phase point, wrapping x into [0, 1)^d."""
    x = wrap_point(_as_point(x, model.dim, "x"))
    v = _as_point(v, model.dim, "v")
    value = float(model.lagrangian(x, v))
    if not np.isfinite(value):
        raise DataError(f"Lagrangian is not finite at x={x}, v={v}: {value}")
    return value


def eval_gradients(model, x, v) -> tuple[np.ndarray, np.ndarray]:
    """Return (grad_x L, grad_v L) at a single phase point."""
    x = wrap_point(_as_point(x, model.dim, "x"))
    v = _as_point(v, model.dim, "v")
    gx = np.asarray(model.grad_x(x, v), dtype=float).reshape(model.dim)
    gv = np.asarray(model.grad_v(x, v), dtype=float).reshape(model.dim)
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gv))):
        raise DataError(f"gradients not finite at x={x}, v={v}")
    return gx, gv


def finite_difference_gradients(model, x, v, step: float = 1e-5):
    """Central-difference gradients, the cross-check for eval_gradients."""
    x = wrap_point(_as_point(x, model.dim, "x"))
    v = _as_point(v, model.dim, "v")
    gx = np.empty(model.dim)
    gv = np.empty(model.dim)
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = step
        gx[i] = (float(model.lagrangian(x + e, v)) - float(model.lagrangian(x - e, v))) / (2 * step)
        gv[i] = (float(model.lagrangian(x, v + e)) - float(model.lagrangian(x, v - e))) / (2 * step)
    return gx, gv


def discrete_action(model, tau: float, x, y) -> float:
    """One-step action tau * L(x, delta/tau), delta the minimal representative.

    Crossing a seam of the fundamental domain is handled by the reduction:
    the velocity is the shortest hop, not the coordinate difference.
    """
    if tau <= 0:
        raise DomainError(f"time step must be positive, got {tau}")
    x = wrap_point(_as_point(x, model.dim, "x"))
    y = wrap_point(_as_point(y, model.dim, "y"))
    delta = minimal_displacement(x, y)
    return tau * eval_lagrangian(model, x, delta / tau)


def energy(model, x, v) -> float:
    """Hamiltonian energy E = v . grad_v L - L at a phase point."""
    x = wrap_point(_as_point(x, model.dim, "x"))
    v = _as_point(v, model.dim, "v")
    _, gv = eval_gradients(model, x, v)
    return float(v @ gv) - eval_lagrangian(model, x, v)


@dataclass(frozen=True)
class SuperlinearityConstants:
    """Sampled bound L(x, v) >= slope * |v| + offset on a velocity box.

    The bound is certified only on the recorded sample, not globally:
    offset is the exact minimum of L - slope * |v| over the sample points.
    """

    slope: float
    offset: float
    search_radius: float
    position_resolution: int
    velocity_resolution: int


def _axis_samples(dim: int, n_pos: int | None, n_vel: int | None):
    if n_pos is None:
        n_pos = 256 if dim == 1 else 32
    if n_vel is None:
        n_vel = 257 if dim == 1 else 33
    return int(n_pos), int(n_vel)


def _sample_phase_box(model, radius: float, n_pos: int, n_vel: int):
    """All (x, v) pairs on a position grid times a velocity box grid."""
    d = model.dim
    xs = np.linspace(0.0, 1.0, n_pos, endpoint=False)
    vs = np.linspace(-radius, radius, n_vel)
    x_grid = np.stack(np.meshgrid(*([xs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    v_grid = np.stack(np.meshgrid(*([vs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return x_grid, v_grid


def superlinearity_constants(
    model,
    slope: float,
    search_radius: float,
    position_resolution: int | None = None,
    velocity_resolution: int | None = None,
) -> SuperlinearityConstants:
    """Sampled offset C with L >= slope * |v| + C on |v|_inf <= search_radius.

    slope is the linear lower-bound coefficient K; the returned offset is
    min over the sample of L(x, v) - slope * |v| with |.| Euclidean.
    """
    if slope <= 0:
        raise DomainError(f"slope must be positive, got {slope}")
    if search_radius <= 0:
        raise DomainError(f"search radius must be positive, got {search_radius}")
    n_pos, n_vel = _axis_samples(model.dim, position_resolution, velocity_resolution)
    if n_pos < 1 or n_vel < 1:
        raise DomainError("sample resolutions must be at least 1")
    x_grid, v_grid = _sample_phase_box(model, search_radius, n_pos, n_vel)
    speeds = np.linalg.norm(v_grid, axis=-1)
    # broadcast positions against velocities: (nx, 1, d) with (1, nv, d)
    values = model.lagrangian(x_grid[:, None, :], v_grid[None, :, :])
    margins = values - slope * speeds[None, :]
    offset = float(margins.min())
    if not np.isfinite(offset):
        raise DataError("Lagrangian is not finite on the sampled phase box")
    return SuperlinearityConstants(
        slope=float(slope),
        offset=offset,
        search_radius=float(search_radius),
        position_resolution=n_pos,
        velocity_resolution=n_vel,
    )


@dataclass(frozen=True)
class FerromagneticReport:
    """Sampled sup |d2L/dxdv| with the user's acceptance threshold."""

    beta_estimate: float
    beta_tolerance: float
    is_ferromagnetic: bool
    velocity_radius: float
    position_resolution: int = field(default=0)
    velocity_resolution: int = field(default=0)


def check_ferromagnetic(
    model,
    velocity_radius: float,
    beta_tolerance: float,
    position_resolution: int | None = None,
    velocity_resolution: int | None = None,
) -> FerromagneticReport:
    """Estimate sup |d2L/dxdv| over a sampled phase box.

    The coupling bound is a sufficient condition for the one-step map to be
    well posed; the estimate is the max absolute entry of the mixed second
    derivative over the sample. Separable models give exactly zero.
    """
    if velocity_radius <= 0:
        raise DomainError(f"velocity radius must be positive, got {velocity_radius}")
    if beta_tolerance < 0:
        raise DomainError(f"beta tolerance must be nonnegative, got {beta_tolerance}")
    n_pos, n_vel = _axis_samples(model.dim, position_resolution, velocity_resolution)
    x_grid, v_grid = _sample_phase_box(model, velocity_radius, n_pos, n_vel)
    beta = 0.0
    # chunk over velocities to keep the mixed-derivative tensor small
    for v in v_grid:
        block = np.abs(model.mixed_second(x_grid, np.broadcast_to(v, x_grid.shape)))
        beta = max(beta, float(block.max()))
    return FerromagneticReport(
        beta_estimate=beta,
        beta_tolerance=float(beta_tolerance),
        is_ferromagnetic=bool(beta <= beta_tolerance),
        velocity_radius=float(velocity_radius),
        position_resolution=n_pos,
        velocity_resolution=n_vel,
    )


def mechanical_model(mass, terms) -> SeparableLagrangian:
    """Convenience constructor: separable model from mass and potential terms."""
    mass = np.atleast_2d(np.asarray(mass, dtype=float))
    return SeparableLagrangian(mass, TrigPolynomial(mass.shape[0], terms))
