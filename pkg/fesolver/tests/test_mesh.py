import numpy as np
import pytest

from fesolver.mesh import BoundaryConditions, build_unit_cube_mesh, shape_function_gradients
from randomfields.grids import gauss_grid


def test_default_mesh_counts():
    mesh = build_unit_cube_mesh()
    assert mesh.n_elements == 100
    assert mesh.n_nodes == 242
    assert mesh.n_dofs == 726
    assert mesh.volume() == pytest.approx(1.0, abs=1e-12)


def test_gauss_grid_matches_field_grid_exactly():
    mesh = build_unit_cube_mesh()
    assert mesh.gauss_grid.shape == (20, 20)
    assert mesh.gauss_grid.same_as(gauss_grid(10))
    x2 = mesh.gauss_grid.axis1[mesh.gauss_index[..., 0]]
    x3 = mesh.gauss_grid.axis2[mesh.gauss_index[..., 1]]
    assert np.array_equal(mesh.gauss_points[..., 1], x2)
    assert np.array_equal(mesh.gauss_points[..., 2], x3)


def test_every_grid_point_is_hit_by_both_thickness_layers():
    mesh = build_unit_cube_mesh(4)
    flat = np.ravel_multi_index((mesh.gauss_index[..., 0].ravel(), mesh.gauss_index[..., 1].ravel()), (8, 8))
    assert np.array_equal(np.bincount(flat, minlength=64), np.full(64, 2))


def test_shape_function_gradients_partition_of_unity():
    points = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
    gradients = shape_function_gradients(points)
    assert np.allclose(gradients.sum(axis=1), 0.0, atol=1e-14)


def test_reference_geometry_reproduces_linear_fields():
    mesh = build_unit_cube_mesh(2)
    gradients, det = mesh.reference_geometry()
    assert np.allclose(det, 1.0 / 32.0)
    coords = mesh.nodes[mesh.elements]
    identity = np.einsum('eai,egaj->egij', coords, gradients)
    assert np.allclose(identity, np.eye(3), atol=1e-12)


def test_boundary_conditions_fix_bottom_and_pull_top():
    mesh = build_unit_cube_mesh(2)
    dofs, values = BoundaryConditions(top_displacement=0.4).prescribed(mesh)
    assert len(set(dofs.tolist())) == dofs.size
    top = mesh.nodes[dofs // 3, 2] == 1.0
    z_dofs = dofs % 3 == 2
    assert np.all(values[top & z_dofs] == 0.4)
    assert np.all(values[~(top & z_dofs)] == 0.0)
    # two corners fix the in-plane rigid motions
    assert np.count_nonzero(dofs % 3 != 2) == 3
