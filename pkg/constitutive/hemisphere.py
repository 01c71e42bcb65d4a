import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from fiberuq.exceptions import InvalidParameter, NegativeDensity, UnreachableResolution

logger = logging.getLogger(__name__)

BASE_FACES = 10
QUADRATURE_LEVEL = 2


@dataclass(frozen=True, eq=False)
class HemisphereMesh:
    """Spherical triangles covering one representative of every antipodal pair of directions.

    ``triangles`` holds the unit vertex vectors, ``directions`` the normalised
    centroids N_n and ``areas`` the spherical areas ΔS_n; the areas sum to 2π.
    """

    triangles: np.ndarray
    directions: np.ndarray
    areas: np.ndarray
    level: int

    @property
    def count(self):
        return self.directions.shape[0]

    @property
    def theta(self):
        return np.arccos(np.clip(self.directions[:, 2], -1.0, 1.0))

    @property
    def phi(self):
        return np.mod(np.arctan2(self.directions[:, 1], self.directions[:, 0]), 2.0 * math.pi)


def _icosahedron():
    ring = 2.0 / math.sqrt(5.0)
    height = 1.0 / math.sqrt(5.0)
    vertices = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
    for i in range(5):
        angle = 2.0 * math.pi * i / 5.0
        vertices.append([ring * math.cos(angle), ring * math.sin(angle), height])
    for i in range(5):
        angle = 2.0 * math.pi * i / 5.0 + math.pi / 5.0
        vertices.append([ring * math.cos(angle), ring * math.sin(angle), -height])
    vertices = np.array(vertices)
    return vertices[ConvexHull(vertices).simplices]


def _normalise(vectors):
    return vectors / np.linalg.norm(vectors, axis=-1, keepdims=True)


def subdivide(triangles):
    """Split every spherical triangle into four through its projected edge midpoints."""
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    ab = _normalise(a + b)
    bc = _normalise(b + c)
    ca = _normalise(c + a)
    children = np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)
    return children.reshape(-1, 3, 3)


def spherical_area(triangles):
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    triple = np.abs(np.einsum('ij,ij->i', a, np.cross(b, c)))
    denominator = 1.0 + np.einsum('ij,ij->i', a, b) + np.einsum('ij,ij->i', b, c) + np.einsum('ij,ij->i', c, a)
    return 2.0 * np.arctan2(triple, denominator)


def centroid_directions(triangles):
    return _normalise(triangles.sum(axis=1))


def resolution_level(m_target):
    level, count = 0, BASE_FACES
    while count < m_target:
        level += 1
        count *= 4
    if count != m_target:
        raise UnreachableResolution(
            f'{m_target} triangles cannot be reached; use {BASE_FACES}·4^k (10, 40, 160, 640, 2560, ...)'
        )
    return level


def discretize_hemisphere(m_target=640):
    level = resolution_level(int(m_target))

    faces = _icosahedron()
    faces = faces[faces.mean(axis=1)[:, 2] > 0.0]
    for _ in range(level):
        faces = subdivide(faces)

    directions = centroid_directions(faces)
    flip = directions[:, 1] < 0.0
    faces = np.where(flip[:, None, None], -faces, faces)
    directions = np.where(flip[:, None], -directions, directions)

    mesh = HemisphereMesh(triangles=faces, directions=directions, areas=spherical_area(faces), level=level)
    logger.debug(f'Hemisphere mesh with {mesh.count} triangles, total area {mesh.areas.sum():.12f}')
    return mesh


def compute_densities(mesh, dispersion, quadrature_level=QUADRATURE_LEVEL):
    """Per-triangle fibre densities ρ_n, normalised so that they sum to one."""
    children = mesh.triangles
    for _ in range(quadrature_level):
        children = subdivide(children)
    values = np.asarray(dispersion(centroid_directions(children)), dtype=np.float64)
    if np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise NegativeDensity(f'{dispersion!r} is negative or not finite on the hemisphere')

    weighted = (values * spherical_area(children)).reshape(mesh.count, -1).sum(axis=1) / (2.0 * math.pi)
    total = weighted.sum()
    if total <= 0.0:
        raise InvalidParameter(f'{dispersion!r} has no mass on the hemisphere')
    return weighted / total


@dataclass(frozen=True)
class VonMisesDispersion:
    """π-periodic von Mises density ρ ∝ exp(2b((N·M)² − 1)) about the mean direction M."""

    mean_direction: tuple
    concentration: float

    def __post_init__(self):
        direction = np.asarray(self.mean_direction, dtype=np.float64)
        if direction.shape != (3,) or not np.linalg.norm(direction) > 0:
            raise InvalidParameter(f'Mean direction must be a non-zero 3-vector, got {self.mean_direction}')
        if self.concentration < 0:
            raise InvalidParameter(f'Concentration must be non-negative, got {self.concentration}')
        object.__setattr__(self, 'mean_direction', tuple(float(x) for x in direction / np.linalg.norm(direction)))

    def __call__(self, directions):
        cosine = np.asarray(directions) @ np.asarray(self.mean_direction)
        return np.exp(2.0 * self.concentration * (cosine ** 2 - 1.0))

    def at_angles(self, theta, phi):
        return self(angles_to_directions(theta, phi))


class UniformDispersion:
    def __call__(self, directions):
        return np.ones(np.asarray(directions).shape[0])

    def __repr__(self):
        return 'UniformDispersion()'


def angles_to_directions(theta, phi):
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
