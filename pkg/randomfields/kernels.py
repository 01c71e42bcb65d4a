import math
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import integrate
from scipy.spatial.distance import cdist

from fiberuq.exceptions import DuplicatePoints, InvalidParameter, UnsupportedFamily


class Family(models.TextChoices):
    SQUARED_EXPONENTIAL = 'squared_exponential', 'Squared exponential'
    MATERN52 = 'matern52', 'Matérn 5/2'


class SpectralForm(models.TextChoices):
    PRINTED = 'printed', 'Printed closed form'
    CONSISTENT = 'consistent', 'Transform of the kernel'


@dataclass(frozen=True)
class CovarianceSpec:
    variance: float
    corr_length: float
    family: str = Family.SQUARED_EXPONENTIAL

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidParameter(f'variance must be positive, got {self.variance}')
        if not self.corr_length > 0:
            raise InvalidParameter(f'corr_length must be positive, got {self.corr_length}')
        if self.family not in Family.values:
            raise InvalidParameter(f'Unknown covariance family {self.family!r}')


def kernel_from_distance(spec, r):
    r = np.asarray(r, dtype=np.float64)
    if spec.family == Family.SQUARED_EXPONENTIAL:
        return spec.variance * np.exp(-r ** 2 / (2.0 * spec.corr_length ** 2))
    scaled = np.sqrt(5.0) * np.abs(r) / spec.corr_length
    return spec.variance * (1.0 + scaled + scaled ** 2 / 3.0) * np.exp(-scaled)


def eval_kernel(spec, x, x_prime):
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    return float(kernel_from_distance(spec, np.linalg.norm(x - x_prime)))


def correlation(spec, lag):
    """Kernel normalised by its zero-lag value."""
    return kernel_from_distance(spec, lag) / spec.variance


def build_cov_matrix(spec, pts):
    coords = pts.coords
    if np.unique(coords, axis=0).shape[0] != coords.shape[0]:
        raise DuplicatePoints(f'{coords.shape[0] - np.unique(coords, axis=0).shape[0]} duplicate coordinates')
    matrix = kernel_from_distance(spec, cdist(coords, coords))
    matrix = 0.5 * (matrix + matrix.T)
    np.fill_diagonal(matrix, spec.variance)
    return matrix


def spectral_density(spec, omega, form=SpectralForm.PRINTED):
    if spec.family != Family.SQUARED_EXPONENTIAL:
        raise UnsupportedFamily(f'No spectral density for the {spec.family} family')
    omega = np.asarray(omega, dtype=np.float64)
    omega_sq = np.sum(omega ** 2, axis=-1)
    iota = spec.corr_length
    if form == SpectralForm.PRINTED:
        return spec.variance * iota / (4.0 * math.pi) * np.exp(-iota ** 2 * omega_sq / 4.0)
    if form == SpectralForm.CONSISTENT:
        return spec.variance * iota ** 2 / (2.0 * math.pi) * np.exp(-iota ** 2 * omega_sq / 2.0)
    raise InvalidParameter(f'Unknown spectral form {form!r}')


def cutoff_frequency(spec, rel_tol, form=SpectralForm.PRINTED):
    """Smallest |ω| at which S drops to ``rel_tol``·S(0)."""
    if not 0.0 < rel_tol < 1.0:
        raise InvalidParameter(f'rel_tol must lie in (0, 1), got {rel_tol}')
    if spec.family != Family.SQUARED_EXPONENTIAL:
        raise UnsupportedFamily(f'No spectral density for the {spec.family} family')
    exponent = 4.0 if form == SpectralForm.PRINTED else 2.0
    return math.sqrt(exponent * math.log(1.0 / rel_tol)) / spec.corr_length


def spectral_mass(spec, form=SpectralForm.PRINTED, rel_tol=1e-12):
    """Integral of S over the plane by radial quadrature; equals k(0) for a consistent transform."""
    cutoff = cutoff_frequency(spec, rel_tol, form)
    value, _ = integrate.quad(
        lambda w: 2.0 * math.pi * w * float(spectral_density(spec, np.array([w, 0.0]), form)),
        0.0,
        cutoff,
        limit=200,
    )
    return value
