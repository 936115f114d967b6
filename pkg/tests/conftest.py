import numpy as np
import pytest

import weakkam as wk


@pytest.fixture(scope="session")
def free_model():
    return wk.mechanical_model([[1.0]], [])


@pytest.fixture(scope="session")
def pendulum():
    return wk.mechanical_model([[1.0]], [(1.0, [1], 0.0)])


@pytest.fixture(scope="session")
def double_well():
    return wk.mechanical_model([[1.0]], [(1.0, [2], 0.0)])


@pytest.fixture(scope="session")
def shifted_pendulum():
    # peak of cos(2 pi x - 2) sits at x = 1/pi, never a grid point
    return wk.mechanical_model([[1.0]], [(1.0, [1], -2.0)])


@pytest.fixture(scope="session")
def pendulum_solved(pendulum):
    grid = wk.build_grid(1, 64)
    graph = wk.build_edge_graph(grid, pendulum, 0.1, wk.VelocityBound(2.0, "user"))
    return graph, wk.solve_weak_kam(graph)


@pytest.fixture(scope="session")
def free_solved(free_model):
    grid = wk.build_grid(1, 16)
    graph = wk.build_edge_graph(grid, free_model, 0.1, wk.VelocityBound(2.0, "user"))
    return graph, wk.solve_weak_kam(graph)


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
