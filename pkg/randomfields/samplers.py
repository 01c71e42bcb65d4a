import logging
import math
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import fft, linalg

from fiberuq.exceptions import (InvalidParameter, NonUniformGrid, NotPositiveDefinite, ShapeMismatch,
                                UnsupportedFamily)
from .grids import Grid, PointSet
from .kernels import Family, SpectralForm, build_cov_matrix, cutoff_frequency, spectral_density
from .rng import make_rng

logger = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class SamplerMethod(models.TextChoices):
    CHOLESKY = 'cholesky', 'Cholesky factor'
    SPECTRAL = 'spectral', 'Spectral representation'
    FFT = 'fft', 'Fast Fourier transform'


@dataclass(frozen=True, eq=False)
class FieldSample:
    values: np.ndarray
    seed: int | None = None
    grid: Grid | None = None
    lineage: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise InvalidParameter('Field values must be finite')
        if self.grid is not None and values.shape != self.grid.shape:
            raise ShapeMismatch(f'Values of shape {values.shape} do not match grid {self.grid.shape}')
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True, eq=False)
class SpectralPlan:
    spec: object
    cutoff: np.ndarray
    resolution: tuple
    steps: np.ndarray
    phase_angles: np.ndarray
    amplitudes: np.ndarray
    offset: float = 0.5
    seed: int | None = None

    def frequencies(self, axis):
        return (np.arange(self.resolution[axis]) + self.offset) * self.steps[axis]


@dataclass(frozen=True)
class SamplerOptions:
    method: str = SamplerMethod.SPECTRAL
    rel_tol: float = 1e-6
    resolution: tuple = (128, 128)
    spectral_form: str = SpectralForm.CONSISTENT
    pivot_offset: float = 0.5
    embedding: float = 2.0
    highres: int = 256


def _as_points(pts):
    return pts.points if isinstance(pts, Grid) else pts


def _shape_values(values, pts):
    return values.reshape(pts.shape) if isinstance(pts, Grid) else values


def cholesky_factor(spec, pts):
    """Lower Cholesky factor of the covariance matrix, with escalating diagonal jitter."""
    matrix = build_cov_matrix(spec, _as_points(pts))
    try:
        return linalg.cholesky(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass

    epsilon = JITTER_START
    identity = np.eye(matrix.shape[0])
    while epsilon <= JITTER_MAX * (1 + 1e-9):
        try:
            factor = linalg.cholesky(matrix + epsilon * spec.variance * identity, lower=True, check_finite=False)
            logger.warning(f'Covariance matrix factorised with jitter {epsilon:.0e}·variance')
            return factor
        except linalg.LinAlgError:
            epsilon *= 10.0

    raise NotPositiveDefinite(
        f'Covariance matrix of {matrix.shape[0]} points is not positive definite with jitter up to {JITTER_MAX}'
    )


def sample_cholesky(spec, pts, seed, factor=None):
    if factor is None:
        factor = cholesky_factor(spec, pts)
    z = make_rng(seed).standard_normal(factor.shape[0])
    values = factor @ z
    return FieldSample(
        values=_shape_values(values, pts),
        seed=int(seed),
        grid=pts if isinstance(pts, Grid) else None,
    )


def _extent(pts):
    coords = _as_points(pts).coords
    return coords.max(axis=0) - coords.min(axis=0)


def plan_spectrum(spec, grid, rel_tol=1e-6, seed=0, resolution=(128, 128), form=SpectralForm.CONSISTENT,
                  offset=0.5):
    """Cutoff, pivots, amplitudes and random phases of the spectral sum.

    The default ``CONSISTENT`` density is the Fourier transform of the kernel,
    so the field variance matches ς² and the cutoff is √(2 ln(1/rel_tol))/ℓ.
    Pass ``form=SpectralForm.PRINTED`` for the printed closed form, whose
    cutoff is √(4 ln(1/rel_tol))/ℓ and which ``cutoff_frequency`` uses by default.
    """
    if spec.family != Family.SQUARED_EXPONENTIAL:
        raise UnsupportedFamily(f'Spectral sampling is not available for the {spec.family} family')
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != 2 or min(resolution) < 1:
        raise InvalidParameter(f'Spectral resolution must be two positive integers, got {resolution}')

    omega_max = cutoff_frequency(spec, rel_tol, form)
    cutoff = np.array([omega_max, omega_max])
    steps = cutoff / np.array(resolution, dtype=np.float64)

    if grid is not None:
        period = 2.0 * math.pi / steps
        if np.any(_extent(grid) > 0.5 * period):
            logger.warning(
                f'Spectral period {period.min():.3g} is shorter than twice the domain extent; '
                f'increase the resolution to avoid periodic artefacts'
            )

    w1 = (np.arange(resolution[0]) + offset) * steps[0]
    w2 = (np.arange(resolution[1]) + offset) * steps[1]
    omega = np.stack(np.meshgrid(w1, w2, indexing='ij'), axis=-1)
    amplitudes = np.sqrt(2.0 * spectral_density(spec, omega, form) * steps[0] * steps[1])

    phase_angles = make_rng(seed).uniform(0.0, 2.0 * math.pi, size=(2, *resolution))

    return SpectralPlan(
        spec=spec,
        cutoff=cutoff,
        resolution=resolution,
        steps=steps,
        phase_angles=phase_angles,
        amplitudes=amplitudes,
        offset=float(offset),
        seed=int(seed),
    )


def sample_spectral(plan, pts):
    """Evaluate the random-phase double cosine sum at every coordinate of ``pts``."""
    upper = plan.amplitudes * np.exp(1j * plan.phase_angles[0])
    lower = plan.amplitudes * np.exp(1j * plan.phase_angles[1])
    w1 = plan.frequencies(0)
    w2 = plan.frequencies(1)

    if isinstance(pts, Grid):
        e1 = np.exp(1j * np.outer(pts.axis1, w1))
        e2 = np.exp(1j * np.outer(pts.axis2, w2))
        total = e1 @ upper @ e2.T + e1 @ lower @ np.conj(e2).T
    else:
        coords = pts.coords
        e1 = np.exp(1j * np.outer(coords[:, 0], w1))
        e2 = np.exp(1j * np.outer(coords[:, 1], w2))
        total = np.sum((e1 @ upper) * e2, axis=1) + np.sum((e1 @ lower) * np.conj(e2), axis=1)

    return FieldSample(
        values=np.sqrt(2.0) * total.real,
        seed=plan.seed,
        grid=pts if isinstance(pts, Grid) else None,
    )


def embedded_shape(grid, embedding=2.0):
    return tuple(int(math.ceil(embedding * n)) for n in grid.shape)


def colour_noise(spec, grid, noise, form=SpectralForm.CONSISTENT, embedding=2.0):
    """Filter white noise on the embedded periodic grid by √S and crop to ``grid``."""
    if not isinstance(grid, Grid) or not grid.is_equidistant():
        raise NonUniformGrid('The FFT sampler needs an equidistant grid')
    if spec.family != Family.SQUARED_EXPONENTIAL:
        raise UnsupportedFamily(f'FFT sampling is not available for the {spec.family} family')

    shape = embedded_shape(grid, embedding)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != shape:
        raise ShapeMismatch(f'Noise of shape {noise.shape} does not match the embedded grid {shape}')

    h1, h2 = grid.spacing()
    w1 = 2.0 * math.pi * fft.fftfreq(shape[0], d=h1)
    w2 = 2.0 * math.pi * fft.rfftfreq(shape[1], d=h2)
    d_omega = (2.0 * math.pi / (shape[0] * h1)) * (2.0 * math.pi / (shape[1] * h2))
    omega = np.stack(np.meshgrid(w1, w2, indexing='ij'), axis=-1)
    multiplier = np.sqrt(shape[0] * shape[1] * spectral_density(spec, omega, form) * d_omega)

    field_values = fft.irfft2(multiplier * fft.rfft2(noise), s=shape)
    return field_values[:grid.shape[0], :grid.shape[1]]


def sample_fft(spec, grid, seed, form=SpectralForm.CONSISTENT, embedding=2.0):
    if not isinstance(grid, Grid) or not grid.is_equidistant():
        raise NonUniformGrid('The FFT sampler needs an equidistant grid')
    noise = make_rng(seed).standard_normal(embedded_shape(grid, embedding))
    return FieldSample(
        values=colour_noise(spec, grid, noise, form=form, embedding=embedding),
        seed=int(seed),
        grid=grid,
    )


def draw_gaussian(spec, grid, seed, options, factor=None):
    """One zero-mean Gaussian sample on ``grid`` with the method chosen in ``options``."""
    if options.method == SamplerMethod.CHOLESKY:
        return sample_cholesky(spec, grid, seed, factor=factor)
    if options.method == SamplerMethod.SPECTRAL:
        plan = plan_spectrum(
            spec, grid,
            rel_tol=options.rel_tol,
            seed=seed,
            resolution=options.resolution,
            form=options.spectral_form,
            offset=options.pivot_offset,
        )
        return sample_spectral(plan, grid)
    if options.method == SamplerMethod.FFT:
        return sample_fft(spec, grid, seed, form=options.spectral_form, embedding=options.embedding)
    raise InvalidParameter(f'Unknown sampler method {options.method!r}')
