import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from fiberuq.exceptions import InvalidDeformation, InvalidParameter
from .hemisphere import QUADRATURE_LEVEL, VonMisesDispersion, compute_densities

logger = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])
VOIGT_INDICES = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
TANGENT_STEP = 1e-6


@dataclass(frozen=True)
class MaterialParams:
    """Ground substance, two collagen families and elastic fibres; stiffnesses in kPa."""

    mu_g: float = 10.0
    k1: float = 20.0
    k2: float = 5.0
    mu_e: float = 30.0
    gamma_e: float = 2.5
    collagen_angle: float = 40.0
    bulk_modulus: float = 1.0e5
    collagen_concentration: float = 5.0
    elastic_concentration: float = 2.0

    def __post_init__(self):
        for name in ('mu_g', 'k2', 'gamma_e', 'bulk_modulus'):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f'{name} must be positive, got {getattr(self, name)}')
        # zero fibre stiffness switches a family off
        for name in ('k1', 'mu_e', 'collagen_concentration', 'elastic_concentration'):
            if getattr(self, name) < 0:
                raise InvalidParameter(f'{name} must be non-negative, got {getattr(self, name)}')

    def collagen_directions(self):
        angle = math.radians(self.collagen_angle)
        return (
            np.array([0.0, math.cos(angle), math.sin(angle)]),
            np.array([0.0, math.cos(angle), -math.sin(angle)]),
        )

    def ground_substance_only(self):
        return MaterialParams(
            mu_g=self.mu_g, k1=0.0, k2=self.k2, mu_e=0.0, gamma_e=self.gamma_e,
            collagen_angle=self.collagen_angle, bulk_modulus=self.bulk_modulus,
            collagen_concentration=self.collagen_concentration, elastic_concentration=self.elastic_concentration,
        )


@dataclass(frozen=True, eq=False)
class FiberDispersion:
    """Discrete fibre directions with their densities, built once per run."""

    directions: np.ndarray
    collagen_densities: np.ndarray
    elastic_densities: np.ndarray

    @property
    def radial_angles(self):
        """Angle α_n between each direction and the radial axis E₃, in [0, π/2]."""
        return np.arccos(np.clip(np.abs(self.directions @ E3), 0.0, 1.0))

    def elastic_mask(self, xi):
        """Elastic fibres that survive degradation ξ; shape ``(*xi.shape, m)``."""
        critical = 0.5 * math.pi * np.asarray(xi, dtype=np.float64)
        return self.radial_angles >= critical[..., None]


def build_fiber_dispersion(mesh, params, quadrature_level=QUADRATURE_LEVEL):
    collagen = np.stack([
        compute_densities(mesh, VonMisesDispersion(tuple(direction), params.collagen_concentration), quadrature_level)
        for direction in params.collagen_directions()
    ])
    elastic = compute_densities(mesh, VonMisesDispersion((0.0, 0.0, 1.0), params.elastic_concentration),
                                quadrature_level)
    return FiberDispersion(directions=mesh.directions, collagen_densities=collagen, elastic_densities=elastic)


@dataclass(frozen=True, eq=False)
class DeformationState:
    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=np.float64)
        if F.shape[-2:] != (3, 3):
            raise InvalidParameter(f'Deformation gradient must be 3×3, got {F.shape}')
        if np.any(np.linalg.det(F) <= 0.0) or not np.all(np.isfinite(F)):
            raise InvalidDeformation('det F must be positive')
        object.__setattr__(self, 'F', F)

    @property
    def J(self):
        return np.asarray(np.linalg.det(self.F))

    @property
    def C(self):
        return np.swapaxes(self.F, -1, -2) @ self.F

    @property
    def C_bar(self):
        return self.J[..., None, None] ** (-2.0 / 3.0) * self.C

    @property
    def I1_bar(self):
        return np.trace(self.C_bar, axis1=-2, axis2=-1)

    def I4(self, directions):
        return np.einsum('ni,...ij,nj->...n', directions, self.C, directions)

    def I4_bar(self, directions):
        return self.J[..., None] ** (-2.0 / 3.0) * self.I4(directions)


# single-fibre energies and their derivatives with respect to Ī₄

def collagen_energy(params, x):
    return params.k1 / (2.0 * params.k2) * (np.exp(params.k2 * (x - 1.0) ** 2) - 1.0)


def collagen_derivative(params, x):
    return params.k1 * (x - 1.0) * np.exp(params.k2 * (x - 1.0) ** 2)


def elastic_energy(params, x):
    return params.mu_e / params.gamma_e * (x ** (0.5 * params.gamma_e) - 1.0) - 0.5 * params.mu_e * np.log(x)


def elastic_derivative(params, x):
    return 0.5 * params.mu_e * (x ** (0.5 * params.gamma_e - 1.0) - 1.0 / x)


def volumetric_energy(params, J):
    return 0.25 * params.bulk_modulus * (J ** 2 - 1.0 - 2.0 * np.log(J))


def volumetric_pressure(params, J):
    return 0.5 * params.bulk_modulus * (J - 1.0 / J)


def volumetric_stiffness(params, J):
    """d²Ψ_vol/dJ²."""
    return 0.5 * params.bulk_modulus * (1.0 + 1.0 / J ** 2)


def _as_state(state):
    return state if isinstance(state, DeformationState) else DeformationState(state)


def _xi(xi, shape):
    xi = np.broadcast_to(np.asarray(xi, dtype=np.float64), shape)
    if np.any(xi < 0.0) or np.any(xi > 1.0):
        raise InvalidParameter('Degradation ξ must lie in [0, 1]')
    return xi


def _fiber_weights(C, J, dispersion, params, xi):
    """Per-direction factors 2ρψ′(Ī₄) of the fictitious stress, zero where a fibre is inactive."""
    directions = dispersion.directions
    I4 = np.einsum('ni,...ij,nj->...n', directions, C, directions)
    I4_bar = J[..., None] ** (-2.0 / 3.0) * I4
    tensile = I4 >= 1.0

    weights = np.zeros_like(I4)
    if params.k1 > 0:
        collagen = dispersion.collagen_densities.sum(axis=0)
        weights += 2.0 * collagen * collagen_derivative(params, I4_bar)
    if params.mu_e > 0:
        elastic = np.where(dispersion.elastic_mask(xi), dispersion.elastic_densities, 0.0)
        weights += 2.0 * elastic * elastic_derivative(params, I4_bar)
    return np.where(tensile, weights, 0.0)


def _fiber_energy(C, J, dispersion, params, xi):
    directions = dispersion.directions
    I4 = np.einsum('ni,...ij,nj->...n', directions, C, directions)
    I4_bar = J[..., None] ** (-2.0 / 3.0) * I4
    tensile = I4 >= 1.0

    energy = np.zeros_like(I4)
    if params.k1 > 0:
        energy += dispersion.collagen_densities.sum(axis=0) * collagen_energy(params, I4_bar)
    if params.mu_e > 0:
        elastic = np.where(dispersion.elastic_mask(xi), dispersion.elastic_densities, 0.0)
        energy += elastic * elastic_energy(params, I4_bar)
    return np.where(tensile, energy, 0.0).sum(axis=-1)


def strain_energy(state, params, dispersion, xi):
    state = _as_state(state)
    C, J = state.C, state.J
    xi = _xi(xi, J.shape)
    ground = 0.5 * params.mu_g * (state.I1_bar - 3.0)
    return volumetric_energy(params, J) + ground + _fiber_energy(C, J, dispersion, params, xi)


def second_piola_kirchhoff_from_C(C, params, dispersion, xi, pressure=None):
    """S(C) for a stack of right Cauchy-Green tensors.

    ``pressure`` replaces the point-wise volumetric pressure dΨ_vol/dJ; the
    finite-element solver passes the element pressure of the mean-dilatation
    formulation here.
    """
    C = np.asarray(C, dtype=np.float64)
    det = np.linalg.det(C)
    if np.any(det <= 0.0) or not np.all(np.isfinite(C)):
        raise InvalidDeformation('det C must be positive')
    J = np.sqrt(np.asarray(det))
    xi = _xi(xi, J.shape)
    C_inv = np.linalg.inv(C)

    weights = _fiber_weights(C, J, dispersion, params, xi)
    fictitious = params.mu_g * np.eye(3) + np.einsum('...n,ni,nj->...ij', weights, dispersion.directions,
                                                   dispersion.directions)
    projection = np.einsum('...ij,...ij->...', fictitious, C)[..., None, None] / 3.0 * C_inv
    isochoric = J[..., None, None] ** (-2.0 / 3.0) * (fictitious - projection)

    p = volumetric_pressure(params, J) if pressure is None else np.broadcast_to(pressure, J.shape)
    return isochoric + (J * p)[..., None, None] * C_inv


def second_piola_kirchhoff(state, params, dispersion, xi, pressure=None):
    state = _as_state(state)
    return second_piola_kirchhoff_from_C(state.C, params, dispersion, xi, pressure=pressure)


def to_voigt(S):
    return np.stack([S[..., i, j] for i, j in VOIGT_INDICES], axis=-1)


def from_voigt(S_v):
    S = np.empty((*S_v.shape[:-1], 3, 3))
    for k, (i, j) in enumerate(VOIGT_INDICES):
        S[..., i, j] = S_v[..., k]
        S[..., j, i] = S_v[..., k]
    return S


def cauchy_stress(state, params, dispersion, xi, pressure=None):
    state = _as_state(state)
    S = second_piola_kirchhoff(state, params, dispersion, xi, pressure=pressure)
    F = state.F
    return F @ S @ np.swapaxes(F, -1, -2) / state.J[..., None, None]


def material_tangent_from_C(C, params, dispersion, xi, pressure=None, step=TANGENT_STEP):
    """6×6 Voigt tangent dS/dE by central differences, engineering shear strains."""
    C = np.asarray(C, dtype=np.float64)
    tangent = np.empty((*C.shape[:-2], 6, 6))
    for k, (i, j) in enumerate(VOIGT_INDICES):
        delta = np.zeros((3, 3))
        # dC = 2 dE, and a shear column perturbs γ = 2 E_ij
        if i == j:
            delta[i, i] = 2.0 * step
        else:
            delta[i, j] = delta[j, i] = step
        plus = second_piola_kirchhoff_from_C(C + delta, params, dispersion, xi, pressure=pressure)
        minus = second_piola_kirchhoff_from_C(C - delta, params, dispersion, xi, pressure=pressure)
        tangent[..., :, k] = (to_voigt(plus) - to_voigt(minus)) / (2.0 * step)
    return tangent


def tangent_to_tensor(tangent):
    tensor = np.empty((*tangent.shape[:-2], 3, 3, 3, 3))
    for a, (i, j) in enumerate(VOIGT_INDICES):
        for b, (k, l) in enumerate(VOIGT_INDICES):
            for p, q in {(i, j), (j, i)}:
                for r, s in {(k, l), (l, k)}:
                    tensor[..., p, q, r, s] = tangent[..., a, b]
    return tensor


def material_tangent(state, params, dispersion, xi, spatial=False, step=TANGENT_STEP, pressure=None):
    state = _as_state(state)
    tangent = material_tangent_from_C(state.C, params, dispersion, xi, pressure=pressure, step=step)
    if not spatial:
        return tangent
    F = state.F
    pushed = np.einsum('...iA,...jB,...kC,...lD,...ABCD->...ijkl', F, F, F, F, tangent_to_tensor(tangent))
    pushed /= state.J[..., None, None, None, None]
    return np.stack([
        np.stack([pushed[..., i, j, k, l] for k, l in VOIGT_INDICES], axis=-1) for i, j in VOIGT_INDICES
    ], axis=-2)


@dataclass(frozen=True, eq=False)
class MaterialPointResult:
    F: np.ndarray
    cauchy: np.ndarray
    converged: bool

    @property
    def sigma33(self):
        return float(self.cauchy[2, 2])


def _uniaxial_gradient(unknowns, stretch):
    F11, F22, F21, F13, F23 = unknowns
    return np.array([
        [F11, 0.0, F13],
        [F21, F22, F23],
        [0.0, 0.0, stretch],
    ])


def uniaxial_material_point(params, dispersion, xi, stretch):
    """Single material point stretched along E₃ with traction-free lateral faces.

    Lateral stretches and the shears left free by the extension test's
    boundary conditions are found by root finding on the five lateral
    Cauchy stress components.
    """
    def residual(unknowns):
        F = _uniaxial_gradient(unknowns, stretch)
        if np.linalg.det(F) <= 0.0:
            return np.full(5, 1e6)
        sigma = cauchy_stress(F, params, dispersion, xi)
        return np.array([sigma[0, 0], sigma[1, 1], sigma[0, 1], sigma[0, 2], sigma[1, 2]]) / params.mu_g

    lateral = 1.0 / math.sqrt(stretch)
    solution = optimize.root(residual, x0=[lateral, lateral, 0.0, 0.0, 0.0], method='hybr', tol=1e-13)
    if not solution.success:
        logger.warning(f'Material point root finding did not converge: {solution.message}')
    F = _uniaxial_gradient(solution.x, stretch)
    return MaterialPointResult(F=F, cauchy=cauchy_stress(F, params, dispersion, xi), converged=bool(solution.success))
