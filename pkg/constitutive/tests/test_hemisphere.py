import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from fiberuq.exceptions import NegativeDensity, UnreachableResolution
from constitutive.hemisphere import (UniformDispersion, VonMisesDispersion, compute_densities, discretize_hemisphere,
                                     resolution_level)


@pytest.mark.parametrize('m_target, level', [(10, 0), (40, 1), (160, 2), (640, 3)])
def test_levels(m_target, level):
    mesh = discretize_hemisphere(m_target)
    assert mesh.count == m_target
    assert mesh.level == level
    assert mesh.areas.sum() == pytest.approx(2.0 * math.pi, rel=1e-10)


@pytest.mark.parametrize('m_target', [0, 20, 100, 641])
def test_unreachable(m_target):
    with pytest.raises(UnreachableResolution):
        resolution_level(m_target)


def test_directions():
    mesh = discretize_hemisphere(640)
    assert np.allclose(np.linalg.norm(mesh.directions, axis=1), 1.0, atol=1e-14)
    assert np.all(mesh.areas > 0.0)
    assert np.all((mesh.theta >= 0.0) & (mesh.theta <= math.pi))
    assert np.all(mesh.phi <= math.pi + 1e-12)
    # no direction appears twice, not even as its antipode
    overlap = np.abs(mesh.directions @ mesh.directions.T) - np.eye(mesh.count)
    assert overlap.max() < 1.0 - 1e-6


def test_uniform_densities_follow_areas():
    mesh = discretize_hemisphere(160)
    densities = compute_densities(mesh, UniformDispersion())
    assert densities.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(densities, mesh.areas / (2.0 * math.pi), rtol=1e-10)


def test_von_mises_is_rotationally_symmetric():
    mesh = discretize_hemisphere(160)
    densities = compute_densities(mesh, VonMisesDispersion((0.0, 0.0, 1.0), 2.0))
    rotated = Rotation.from_euler('z', 72.0, degrees=True).apply(mesh.directions)
    matches = np.abs(rotated @ mesh.directions.T).argmax(axis=1)
    assert np.allclose(np.abs(np.einsum('ij,ij->i', rotated, mesh.directions[matches])), 1.0, atol=1e-12)
    assert np.allclose(densities[matches], densities, rtol=1e-9)


def test_concentrated_mass():
    mesh = discretize_hemisphere(160)
    target = 37
    densities = compute_densities(mesh, VonMisesDispersion(tuple(mesh.directions[target]), 1000.0))
    assert densities[target] > 0.99
    assert densities.sum() == pytest.approx(1.0, abs=1e-12)


def test_negative_density():
    mesh = discretize_hemisphere(10)
    with pytest.raises(NegativeDensity):
        compute_densities(mesh, lambda directions: directions[:, 2] - 2.0)
