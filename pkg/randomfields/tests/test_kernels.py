import math

import numpy as np
import pytest

from fiberuq.exceptions import DuplicatePoints, InvalidParameter, UnsupportedFamily
from randomfields.grids import PointSet, pixel_grid
from randomfields.kernels import (CovarianceSpec, Family, SpectralForm, build_cov_matrix, correlation,
                                  cutoff_frequency, eval_kernel, spectral_density, spectral_mass)

AORTA_SPEC = CovarianceSpec(variance=0.173, corr_length=math.sqrt(2.0) / 3.0)
UNIT_SPEC = CovarianceSpec(variance=1.0, corr_length=1.0)


class TestCovarianceSpec:
    @pytest.mark.parametrize('variance, corr_length', [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
    def test_rejects_non_positive_parameters(self, variance, corr_length):
        with pytest.raises(InvalidParameter):
            CovarianceSpec(variance=variance, corr_length=corr_length)

    def test_rejects_unknown_family(self):
        with pytest.raises(InvalidParameter):
            CovarianceSpec(variance=1.0, corr_length=1.0, family='exponential')


class TestEvalKernel:
    def test_zero_lag_is_variance(self):
        assert eval_kernel(AORTA_SPEC, [0.3, 0.7], [0.3, 0.7]) == 0.173
        assert eval_kernel(UNIT_SPEC, [0.0, 0.0], [0.0, 0.0]) == 1.0

    def test_hand_value(self):
        assert eval_kernel(UNIT_SPEC, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, y = rng.uniform(-2, 2, size=(2, 2))
            value = eval_kernel(AORTA_SPEC, x, y)
            assert value == eval_kernel(AORTA_SPEC, y, x)
            assert 0.0 < value <= AORTA_SPEC.variance

    def test_matern_zero_lag(self):
        spec = CovarianceSpec(variance=2.0, corr_length=0.5, family=Family.MATERN52)
        assert eval_kernel(spec, [1.0, 1.0], [1.0, 1.0]) == 2.0
        assert correlation(spec, 0.3) < 1.0


class TestBuildCovMatrix:
    def test_single_point(self):
        matrix = build_cov_matrix(AORTA_SPEC, PointSet([[0.5, 0.5]]))
        assert matrix.shape == (1, 1)
        assert matrix[0, 0] == 0.173

    def test_two_points(self):
        matrix = build_cov_matrix(UNIT_SPEC, PointSet([[0.0, 0.0], [1.0, 1.0]]))
        assert matrix[0, 1] == pytest.approx(math.exp(-1.0))
        assert matrix[0, 1] == matrix[1, 0]

    def test_grid_diagonal_and_symmetry(self):
        matrix = build_cov_matrix(AORTA_SPEC, pixel_grid(16).points)
        assert matrix.shape == (256, 256)
        assert np.all(np.diag(matrix) == 0.173)
        assert np.array_equal(matrix, matrix.T)
        assert np.linalg.eigvalsh(matrix).min() >= -1e-10 * AORTA_SPEC.variance

    def test_duplicates_rejected(self):
        with pytest.raises(DuplicatePoints):
            build_cov_matrix(UNIT_SPEC, PointSet([[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]]))


class TestSpectralDensity:
    def test_printed_value_at_origin(self):
        assert spectral_density(UNIT_SPEC, [0.0, 0.0]) == pytest.approx(1.0 / (4.0 * math.pi))

    def test_even_and_maximal_at_origin(self):
        omega = np.array([[1.3, -0.4], [0.2, 2.2]])
        for form in SpectralForm.values:
            assert np.array_equal(spectral_density(AORTA_SPEC, omega, form), spectral_density(AORTA_SPEC, -omega, form))
            assert np.all(spectral_density(AORTA_SPEC, omega, form) < spectral_density(AORTA_SPEC, [0.0, 0.0], form))

    def test_consistent_form_integrates_to_variance(self):
        for spec in (UNIT_SPEC, AORTA_SPEC):
            assert spectral_mass(spec, SpectralForm.CONSISTENT) == pytest.approx(spec.variance, rel=1e-2)

    def test_printed_form_mass_is_reported(self):
        # the closed form as printed carries mass ς²/ι rather than ς²
        mass = spectral_mass(AORTA_SPEC, SpectralForm.PRINTED)
        assert mass == pytest.approx(AORTA_SPEC.variance / AORTA_SPEC.corr_length, rel=1e-6)

    def test_unsupported_family(self):
        spec = CovarianceSpec(variance=1.0, corr_length=1.0, family=Family.MATERN52)
        with pytest.raises(UnsupportedFamily):
            spectral_density(spec, [0.0, 0.0])


class TestCutoff:
    def test_printed_inversion(self):
        assert cutoff_frequency(UNIT_SPEC, 1e-6) == pytest.approx(2.0 * math.sqrt(math.log(1e6)))

    def test_density_at_cutoff(self):
        for form in SpectralForm.values:
            cutoff = cutoff_frequency(AORTA_SPEC, 1e-6, form)
            ratio = spectral_density(AORTA_SPEC, [cutoff, 0.0], form) / spectral_density(AORTA_SPEC, [0.0, 0.0], form)
            assert ratio == pytest.approx(1e-6, rel=1e-9)

    @pytest.mark.parametrize('rel_tol', [0.0, 1.0, -0.5, 2.0])
    def test_rel_tol_range(self, rel_tol):
        with pytest.raises(InvalidParameter):
            cutoff_frequency(UNIT_SPEC, rel_tol)
