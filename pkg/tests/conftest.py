import numpy as np
import pytest

from hdivkit import fields, mesh as mesh_mod


@pytest.fixture(scope="session")
def unit_square_2():
    return mesh_mod.build_structured(2)


@pytest.fixture(scope="session")
def unit_square_4():
    return mesh_mod.build_structured(4)


@pytest.fixture(scope="session")
def ref_triangle_mesh():
    """Single-element mesh on the reference triangle."""
    return mesh_mod.Mesh(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0, 1, 2]],
        [((0, 1), "dirichlet"), ((1, 2), "dirichlet"), ((0, 2), "dirichlet")],
    )


@pytest.fixture(scope="session")
def sine_field():
    return fields.catalog("sine_divfree")


@pytest.fixture(scope="session")
def cubic_field():
    return fields.catalog("cubic")


@pytest.fixture(scope="session")
def exp_field():
    return fields.AnalyticField(
        "exp",
        lambda pts: np.stack([np.exp(pts[:, 0]), np.exp(pts[:, 1])], axis=1),
        lambda pts: np.exp(pts[:, 0]) + np.exp(pts[:, 1]),
    )


def x2_field():
    """v = (x^2, 0), the hand-computed interpolation example."""
    return fields.AnalyticField(
        "x2",
        lambda pts: np.stack([pts[:, 0] ** 2, np.zeros(len(pts))], axis=1),
        lambda pts: 2 * pts[:, 0],
        poly_degree=2,
    )


def x3_field():
    """v = (x^3, 0) with divergence 3x^2."""
    return fields.AnalyticField(
        "x3",
        lambda pts: np.stack([pts[:, 0] ** 3, np.zeros(len(pts))], axis=1),
        lambda pts: 3 * pts[:, 0] ** 2,
        poly_degree=3,
    )
