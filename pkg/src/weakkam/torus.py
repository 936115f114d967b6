"""Geometry of the flat torus R^d / Z^d shared by all other modules.

Positions live in the fundamental domain [0, 1)^d. Displacements between
points are always reduced to the unique representative in [-1/2, 1/2)^d,
with ties at +-1/2 resolving to -1/2.
"""

from __future__ import annotations

import numpy as np


def wrap_point(x) -> np.ndarray:
    """Reduce coordinates to the fundamental domain [0, 1)^d."""
    return np.asarray(x, dtype=float) % 1.0


def minimal_displacement(x, y) -> np.ndarray:
    """Componentwise displacement y - x reduced to [-1/2, 1/2).

    The reduction (delta + 1/2) mod 1 - 1/2 sends a tie at +1/2 to -1/2,
    so the representative is unique even on cell boundaries.
    """
    delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return (delta + 0.5) % 1.0 - 0.5


def torus_distance(x, y) -> np.ndarray | float:
    """Euclidean length of the minimal displacement (batched over leading axes)."""
    d = minimal_displacement(x, y)
    return np.linalg.norm(np.atleast_1d(d), axis=-1)
