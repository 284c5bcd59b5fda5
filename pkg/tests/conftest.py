import numpy as np
import pytest

from sbpwave import generate_circle_mesh, make_operator
from sbpwave.assembly import build_global_operators
from sbpwave.mesh import MultiblockMesh, four_block_square_mesh, two_block_square_mesh


@pytest.fixture(scope="session")
def op5():
    return make_operator(5)


@pytest.fixture(scope="session")
def op7():
    return make_operator(7)


@pytest.fixture(scope="session")
def op9():
    return make_operator(9)


@pytest.fixture(scope="session")
def two_block_gops(op5):
    return build_global_operators(two_block_square_mesh(), op5)


@pytest.fixture(scope="session")
def four_block_gops(op5):
    return build_global_operators(four_block_square_mesh(), op5)


@pytest.fixture(scope="session")
def circle1_gops(op5):
    return build_global_operators(generate_circle_mesh(1), op5)


@pytest.fixture(scope="session")
def circle2_mesh():
    return generate_circle_mesh(2)


def retag_circle(mesh, splits=3):
    """Split the single outer tag into 2 or 3 tags by midpoint angle."""
    tags = {}
    for (k, side) in mesh.boundary_tags:
        mid = mesh.blocks[k].edge(side).at(0.5)
        ang = np.arctan2(mid[1], mid[0]) % (2 * np.pi)
        if splits == 3:
            tag = "arc_a" if ang < 2 * np.pi / 3 else ("arc_b" if ang < 4 * np.pi / 3 else "arc_c")
        else:
            tag = "arc_a" if ang < np.pi else "arc_b"
        tags[(k, side)] = tag
    return MultiblockMesh(mesh.blocks, mesh.interfaces, tags)


@pytest.fixture(scope="session")
def circle2_mixed_gops(circle2_mesh, op5):
    return build_global_operators(retag_circle(circle2_mesh), op5)
