from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import sparse

from constitutive.material import (material_tangent_from_C, second_piola_kirchhoff_from_C, strain_energy,
                                   to_voigt, volumetric_energy, volumetric_pressure, volumetric_stiffness)
from fiberuq.exceptions import ElementInversion, MeshFieldMismatch

TANGENT_STEP = 1e-6


class Volumetric(models.TextChoices):
    MEAN_DILATATION = 'mean_dilatation', 'Element-constant pressure from the mean dilatation'
    FULL = 'full', 'Point-wise volumetric energy'


def gauss_degradation(mesh, field):
    """ξ at every element Gauss point; both thickness layers share the in-plane value."""
    if field.values.shape != mesh.gauss_grid.shape or not field.grid.same_as(mesh.gauss_grid):
        raise MeshFieldMismatch(
            f'Field of shape {field.values.shape} is not defined on the mesh Gauss grid {mesh.gauss_grid.shape}'
        )
    return field.values[mesh.gauss_index[:, :, 0], mesh.gauss_index[:, :, 1]]


def deformation_gradients(mesh, u, gradients):
    displacements = u[mesh.element_dofs()].reshape(mesh.n_elements, 8, 3)
    return np.eye(3) + np.einsum('eai,egaj->egij', displacements, gradients)


def b_matrices(F, gradients):
    """Total Lagrangian B₀ with {δE} = B₀ {δu_e}, rows in Voigt order 11, 22, 33, 23, 13, 12."""
    n_elements, n_gauss = F.shape[:2]
    B0 = np.empty((n_elements, n_gauss, 6, 8, 3))
    rows = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
    for row, (i, j) in enumerate(rows):
        B0[:, :, row] = np.einsum('ega,egk->egak', gradients[..., j], F[..., :, i])
        if i != j:
            B0[:, :, row] += np.einsum('ega,egk->egak', gradients[..., i], F[..., :, j])
    return B0.reshape(n_elements, n_gauss, 6, 24)


@dataclass(frozen=True, eq=False)
class ElementState:
    F: np.ndarray
    C: np.ndarray
    J: np.ndarray
    S: np.ndarray
    B0: np.ndarray
    gradients: np.ndarray
    det0: np.ndarray
    volumes: np.ndarray
    J_bar: np.ndarray
    pressure: np.ndarray | None

    def cauchy(self):
        return self.F @ self.S @ np.swapaxes(self.F, -1, -2) / self.J[..., None, None]


def element_pressure(params, J_bar, multipliers=None):
    pressure = volumetric_pressure(params, J_bar)
    return pressure if multipliers is None else pressure + multipliers


def evaluate_state(mesh, u, params, dispersion, xi, volumetric=Volumetric.MEAN_DILATATION, multipliers=None,
                   geometry=None):
    gradients, det0 = geometry if geometry is not None else mesh.reference_geometry()
    F = deformation_gradients(mesh, u, gradients)
    J = np.linalg.det(F)
    if np.any(J <= 0.0) or not np.all(np.isfinite(J)):
        inverted = np.unique(np.nonzero(~(J > 0.0))[0])
        raise ElementInversion(f'Elements {inverted.tolist()[:10]} have a non-positive Jacobian')

    C = np.swapaxes(F, -1, -2) @ F
    volumes = det0.sum(axis=1)
    J_bar = (J * det0).sum(axis=1) / volumes

    shape = J.shape
    if volumetric == Volumetric.MEAN_DILATATION:
        pressure = element_pressure(params, J_bar, multipliers)
        pointwise = np.broadcast_to(pressure[:, None], shape).ravel()
    else:
        pressure = None
        pointwise = None
    S = second_piola_kirchhoff_from_C(C.reshape(-1, 3, 3), params, dispersion, xi.ravel(), pressure=pointwise)

    return ElementState(
        F=F, C=C, J=J, S=S.reshape(*shape, 3, 3), B0=b_matrices(F, gradients), gradients=gradients, det0=det0,
        volumes=volumes, J_bar=J_bar, pressure=pressure,
    )


def _scatter_vector(mesh, element_vectors):
    return np.bincount(mesh.element_dofs().ravel(), weights=element_vectors.ravel(), minlength=mesh.n_dofs)


def _scatter_matrix(mesh, element_matrices):
    dofs = mesh.element_dofs()
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    return sparse.coo_matrix((element_matrices.ravel(), (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs)).tocsr()


def assemble_residual_and_stiffness(mesh, u, params, dispersion, xi, volumetric=Volumetric.MEAN_DILATATION,
                                    multipliers=None, tangent_step=TANGENT_STEP, with_stiffness=True, geometry=None):
    """Internal force vector and consistent stiffness of the whole mesh.

    Returns ``(residual, stiffness, state)``; ``stiffness`` is ``None`` when
    ``with_stiffness`` is false.
    """
    state = evaluate_state(mesh, u, params, dispersion, xi, volumetric, multipliers, geometry)
    S_voigt = to_voigt(state.S)
    element_forces = np.einsum('egvd,egv,eg->ed', state.B0, S_voigt, state.det0)
    residual = _scatter_vector(mesh, element_forces)
    if not with_stiffness:
        return residual, None, state

    n_elements, n_gauss = state.J.shape
    pointwise = None
    if state.pressure is not None:
        pointwise = np.broadcast_to(state.pressure[:, None], state.J.shape).ravel()
    tangent = material_tangent_from_C(
        state.C.reshape(-1, 3, 3), params, dispersion, xi.ravel(), pressure=pointwise, step=tangent_step,
    ).reshape(n_elements, n_gauss, 6, 6)

    material = np.einsum('egvd,egvw,egwf,eg->edf', state.B0, tangent, state.B0, state.det0)
    geometric_small = np.einsum('egai,egij,egbj,eg->eab', state.gradients, state.S, state.gradients, state.det0)
    geometric = np.einsum('eab,kl->eakbl', geometric_small, np.eye(3)).reshape(n_elements, 24, 24)
    element_stiffness = material + geometric

    if volumetric == Volumetric.MEAN_DILATATION:
        JC_inv = state.J[..., None, None] * np.linalg.inv(state.C)
        g = np.einsum('egvd,egv,eg->ed', state.B0, to_voigt(JC_inv), state.det0)
        factor = volumetric_stiffness(params, state.J_bar) / state.volumes
        element_stiffness = element_stiffness + factor[:, None, None] * np.einsum('ed,ef->edf', g, g)

    return residual, _scatter_matrix(mesh, element_stiffness), state


def total_energy(mesh, u, params, dispersion, xi, volumetric=Volumetric.MEAN_DILATATION, multipliers=None):
    gradients, det0 = mesh.reference_geometry()
    F = deformation_gradients(mesh, u, gradients)
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise ElementInversion('Energy is undefined for inverted elements')
    density = strain_energy(F.reshape(-1, 3, 3), params, dispersion, xi.ravel()).reshape(J.shape)
    if volumetric == Volumetric.FULL:
        return float((density * det0).sum())

    isochoric = density - volumetric_energy(params, J)
    volumes = det0.sum(axis=1)
    J_bar = (J * det0).sum(axis=1) / volumes
    energy = (isochoric * det0).sum() + (volumes * volumetric_energy(params, J_bar)).sum()
    if multipliers is not None:
        energy += (multipliers * volumes * (J_bar - 1.0)).sum()
    return float(energy)
