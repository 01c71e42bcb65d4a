from dataclasses import dataclass

import numpy as np

from randomfields.grids import GAUSS_ABSCISSA, Grid, gauss_axis

# local node order of the 8-node hexahedron in (ξ₁, ξ₂, ξ₃)
HEX8_CORNERS = np.array([
    [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
], dtype=np.float64)

# 2×2×2 Gauss points, ordered like the corners; every weight is one
GAUSS_SIGNS = HEX8_CORNERS.copy()
GAUSS_LOCAL = GAUSS_SIGNS * GAUSS_ABSCISSA


def shape_function_gradients(points):
    """dN_a/dξ of the trilinear hexahedron at local ``points``; shape ``(n_points, 8, 3)``."""
    points = np.atleast_2d(points)
    factors = 1.0 + points[:, None, :] * HEX8_CORNERS[None, :, :]
    gradients = np.empty((points.shape[0], 8, 3))
    for axis in range(3):
        others = [k for k in range(3) if k != axis]
        gradients[:, :, axis] = 0.125 * HEX8_CORNERS[None, :, axis] * factors[:, :, others[0]] * factors[:, :, others[1]]
    return gradients


@dataclass(frozen=True, eq=False)
class HexMesh:
    """Structured hexahedral mesh of a box.

    X₁ runs through the thickness, (X₂, X₃) span the plane on which the
    degradation field lives; ``gauss_grid`` is the in-plane Gauss grid shared
    with the random-field sampler and ``gauss_index`` maps every element Gauss
    point onto it.
    """

    nodes: np.ndarray
    elements: np.ndarray
    divisions: tuple
    lengths: tuple
    gauss_grid: Grid
    gauss_index: np.ndarray
    gauss_points: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_dofs(self):
        return 3 * self.n_nodes

    def node_index(self, i1, i2, i3):
        n1, n2, n3 = self.divisions
        return (i1 * (n2 + 1) + i2) * (n3 + 1) + i3

    def element_dofs(self):
        return (3 * self.elements[:, :, None] + np.arange(3)[None, None, :]).reshape(self.n_elements, 24)

    def reference_geometry(self):
        """Shape-function gradients dN/dX and Jacobian determinants at every element Gauss point."""
        local = shape_function_gradients(GAUSS_LOCAL)
        coords = self.nodes[self.elements]
        jacobian = np.einsum('eai,gaj->egij', coords, local)
        det = np.linalg.det(jacobian)
        gradients = np.einsum('gaj,egji->egai', local, np.linalg.inv(jacobian))
        return gradients, det

    def volume(self):
        return float(self.reference_geometry()[1].sum())


def build_unit_cube_mesh(n_elements=10, n_thickness=1, length=1.0):
    n1, n2, n3 = n_thickness, n_elements, n_elements
    h = (length / n1, length / n2, length / n3)
    i1, i2, i3 = np.meshgrid(np.arange(n1 + 1), np.arange(n2 + 1), np.arange(n3 + 1), indexing='ij')
    nodes = np.column_stack([i1.ravel() * h[0], i2.ravel() * h[1], i3.ravel() * h[2]])

    def node(a, b, c):
        return (a * (n2 + 1) + b) * (n3 + 1) + c

    elements, gauss_index = [], []
    for e1 in range(n1):
        for e2 in range(n2):
            for e3 in range(n3):
                corners = [node(e1 + (s1 > 0), e2 + (s2 > 0), e3 + (s3 > 0)) for s1, s2, s3 in HEX8_CORNERS]
                elements.append(corners)
                gauss_index.append([[2 * e2 + (s2 > 0), 2 * e3 + (s3 > 0)] for _, s2, s3 in GAUSS_SIGNS])
    elements = np.array(elements, dtype=np.int64)
    gauss_index = np.array(gauss_index, dtype=np.int64)

    axis2 = gauss_axis(n2, length)
    axis3 = gauss_axis(n3, length)
    grid = Grid(axis2, axis3)

    thickness_axis = gauss_axis(n1, length)
    gauss_points = np.empty((elements.shape[0], 8, 3))
    for e, element in enumerate(elements):
        e1 = int(round(nodes[element[0], 0] / h[0]))
        for g, (s1, _, _) in enumerate(GAUSS_SIGNS):
            gauss_points[e, g, 0] = thickness_axis[2 * e1 + (s1 > 0)]
    gauss_points[:, :, 1] = grid.axis1[gauss_index[:, :, 0]]
    gauss_points[:, :, 2] = grid.axis2[gauss_index[:, :, 1]]

    return HexMesh(
        nodes=nodes,
        elements=elements,
        divisions=(n1, n2, n3),
        lengths=(length, length, length),
        gauss_grid=grid,
        gauss_index=gauss_index,
        gauss_points=gauss_points,
    )


@dataclass(frozen=True)
class BoundaryConditions:
    """Uniaxial extension along E₃ with traction-free lateral faces."""

    top_displacement: float = 0.4

    def prescribed(self, mesh):
        """Constrained dofs and their values at full load."""
        n1, n2, n3 = mesh.divisions
        dofs, values = [], []
        for a in range(n1 + 1):
            for b in range(n2 + 1):
                dofs.append(3 * mesh.node_index(a, b, 0) + 2)
                values.append(0.0)
                dofs.append(3 * mesh.node_index(a, b, n3) + 2)
                values.append(self.top_displacement)
        origin = mesh.node_index(0, 0, 0)
        dofs += [3 * origin, 3 * origin + 1]
        values += [0.0, 0.0]
        dofs.append(3 * mesh.node_index(0, n2, 0))
        values.append(0.0)
        return np.array(dofs, dtype=np.int64), np.array(values)
