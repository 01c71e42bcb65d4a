import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from fiberuq.exceptions import InvalidDeformation
from constitutive.hemisphere import discretize_hemisphere
from constitutive.material import (MaterialParams, build_fiber_dispersion, cauchy_stress, collagen_energy,
                                   elastic_energy, material_tangent, second_piola_kirchhoff,
                                   uniaxial_material_point, strain_energy, volumetric_energy)

PARAMS = MaterialParams()
XI_VALUES = (0.0, 0.3, 0.7, 1.0)


@pytest.fixture(scope='module')
def dispersion():
    return build_fiber_dispersion(discretize_hemisphere(160), PARAMS)


def _isochoric_tensile(rng, stretch_range=(1.05, 1.5)):
    stretch = rng.uniform(*stretch_range)
    M = np.diag([1.0 / math.sqrt(stretch), 1.0 / math.sqrt(stretch), stretch]) + 0.08 * rng.standard_normal((3, 3))
    return M / np.cbrt(np.linalg.det(M))


def _uniaxial(stretch):
    lateral = 1.0 / math.sqrt(stretch)
    return np.diag([lateral, lateral, stretch])


def test_dispersion_densities_are_normalised(dispersion):
    assert np.allclose(dispersion.collagen_densities.sum(axis=1), 1.0, atol=1e-12)
    assert dispersion.elastic_densities.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('xi', XI_VALUES)
def test_reference_configuration_is_stress_free(dispersion, xi):
    assert strain_energy(np.eye(3), PARAMS, dispersion, xi) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(cauchy_stress(np.eye(3), PARAMS, dispersion, xi), 0.0, atol=1e-9)


def test_pure_dilatation(dispersion):
    stretch = 1.01
    J = stretch ** 3
    sigma = cauchy_stress(stretch * np.eye(3), PARAMS, dispersion, 0.0)
    expected = 0.5 * PARAMS.bulk_modulus * (J ** 2 - 1.0) / J
    assert np.allclose(sigma, expected * np.eye(3), rtol=1e-9, atol=1e-8 * expected)


def test_isochoric_deformation_has_no_volumetric_energy():
    rng = np.random.default_rng(4)
    F = _isochoric_tensile(rng)
    assert volumetric_energy(PARAMS, np.linalg.det(F)) == pytest.approx(0.0, abs=1e-9)


def test_single_fibre_energies_vanish_at_unit_stretch():
    assert collagen_energy(PARAMS, 1.0) == 0.0
    assert elastic_energy(PARAMS, 1.0) == 0.0


def test_stress_matches_energy_gradient(dispersion):
    rng = np.random.default_rng(12)
    step = 1e-6
    for sample in range(100):
        F = _isochoric_tensile(rng)
        xi = XI_VALUES[sample % len(XI_VALUES)]
        P = F @ second_piola_kirchhoff(F, PARAMS, dispersion, xi)
        numeric = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                delta = np.zeros((3, 3))
                delta[i, j] = step
                numeric[i, j] = (strain_energy(F + delta, PARAMS, dispersion, xi)
                                 - strain_energy(F - delta, PARAMS, dispersion, xi)) / (2.0 * step)
        assert np.linalg.norm(numeric - P) / np.linalg.norm(P) < 1e-5


def test_frame_invariance(dispersion):
    rng = np.random.default_rng(5)
    for seed in range(20):
        F = _isochoric_tensile(rng) * rng.uniform(0.98, 1.02)
        Q = Rotation.random(random_state=seed).as_matrix()
        for xi in XI_VALUES:
            assert strain_energy(Q @ F, PARAMS, dispersion, xi) == pytest.approx(
                strain_energy(F, PARAMS, dispersion, xi), rel=1e-10, abs=1e-10)


def test_energy_non_increasing_in_degradation(dispersion):
    rng = np.random.default_rng(6)
    xi = np.linspace(0.0, 1.0, 21)
    for _ in range(20):
        F = _isochoric_tensile(rng)
        energies = strain_energy(np.broadcast_to(F, (xi.size, 3, 3)), PARAMS, dispersion, xi)
        active = dispersion.elastic_mask(xi).sum(axis=1)
        assert np.all(np.diff(energies) <= 1e-12)
        assert np.all(np.diff(active) <= 0)


def test_uniaxial_stretch_energy_drops_with_degradation(dispersion):
    F = _uniaxial(1.4)
    assert strain_energy(F, PARAMS, dispersion, 0.0) >= strain_energy(F, PARAMS, dispersion, 0.5)


def test_full_degradation_matches_term_by_term_sum(dispersion):
    F = _uniaxial(1.4)
    C = F.T @ F
    J = np.linalg.det(F)
    expected = volumetric_energy(PARAMS, J) + 0.5 * PARAMS.mu_g * (J ** (-2.0 / 3.0) * np.trace(C) - 3.0)
    for n, direction in enumerate(dispersion.directions):
        I4 = direction @ C @ direction
        if I4 < 1.0:
            continue
        I4_bar = J ** (-2.0 / 3.0) * I4
        expected += dispersion.collagen_densities[:, n].sum() * collagen_energy(PARAMS, I4_bar)
        if math.acos(min(1.0, abs(direction[2]))) >= 0.5 * math.pi:
            expected += dispersion.elastic_densities[n] * elastic_energy(PARAMS, I4_bar)
    assert strain_energy(F, PARAMS, dispersion, 1.0) == pytest.approx(expected, rel=1e-12)


def test_small_strain_tangent_of_ground_substance(dispersion):
    params = PARAMS.ground_substance_only()
    tangent = material_tangent(np.eye(3), params, dispersion, 0.0)
    for k in (3, 4, 5):
        assert tangent[k, k] == pytest.approx(params.mu_g, rel=1e-3)
    assert tangent[0, 0] - tangent[0, 1] == pytest.approx(2.0 * params.mu_g, rel=1e-3)
    assert np.allclose(material_tangent(np.eye(3), params, dispersion, 0.0, spatial=True), tangent, rtol=1e-10)


def test_tangent_major_symmetry_and_step_plateau(dispersion):
    rng = np.random.default_rng(8)
    for xi in XI_VALUES:
        F = _isochoric_tensile(rng)
        tangents = [material_tangent(F, PARAMS, dispersion, xi, step=step) for step in (1e-5, 1e-6, 1e-7)]
        scale = np.abs(tangents[1]).max()
        assert np.abs(tangents[1] - tangents[1].T).max() / scale < 1e-4
        assert np.abs(tangents[0] - tangents[1]).max() / scale < 1e-4
        assert np.abs(tangents[2] - tangents[1]).max() / scale < 1e-4


def test_inverted_deformation_rejected(dispersion):
    with pytest.raises(InvalidDeformation):
        cauchy_stress(np.diag([1.0, 1.0, -1.0]), PARAMS, dispersion, 0.0)


def test_uniaxial_material_point(dispersion):
    healthy = uniaxial_material_point(PARAMS, dispersion, 0.0, 1.4)
    degraded = uniaxial_material_point(PARAMS, dispersion, 0.5, 1.4)
    for result in (healthy, degraded):
        assert result.converged
        lateral = result.cauchy[[0, 1, 0, 0, 1], [0, 1, 1, 2, 2]]
        assert np.abs(lateral).max() < 1e-8 * result.sigma33
        assert abs(np.linalg.det(result.F) - 1.0) < 1e-3
    assert healthy.sigma33 >= degraded.sigma33 > 0.0
