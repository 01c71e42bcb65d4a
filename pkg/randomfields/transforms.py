import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from fiberuq.exceptions import (DegenerateSite, InvalidField, InvalidParameter, OutOfDomain, OutOfSupport,
                                ShapeMismatch)
from .grids import Grid, pixel_grid
from .kernels import correlation, kernel_from_distance
from .rng import stream_seed
from .samplers import FieldSample, SamplerMethod, SamplerOptions, cholesky_factor, draw_gaussian

SERIES_LIMIT = 0.25


@dataclass(frozen=True)
class BetaFieldParams:
    s: int = 1
    s_prime: int = 1

    def __post_init__(self):
        if int(self.s) != self.s or int(self.s_prime) != self.s_prime:
            raise InvalidParameter('Beta field shape parameters must be integers')
        if self.s < 1 or self.s_prime < 1:
            raise InvalidParameter(f'Beta field shape parameters must be >= 1, got ({self.s}, {self.s_prime})')

    @property
    def gaussians_per_field(self):
        return 2 * self.s + 2 * self.s_prime


@dataclass(frozen=True, eq=False)
class DegradationField:
    values: np.ndarray
    grid: Grid
    seeds: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ShapeMismatch(f'Degradation values of shape {values.shape} do not match grid {self.grid.shape}')
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise InvalidField('Degradation values must lie in [0, 1]')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'seeds', tuple(int(seed) for seed in self.seeds))


def _check_aligned(samples):
    shape = samples[0].values.shape
    for sample in samples[1:]:
        if sample.values.shape != shape:
            raise ShapeMismatch(f'Field shapes differ: {shape} vs {sample.values.shape}')
        if (sample.grid is None) != (samples[0].grid is None) or (
                sample.grid is not None and not sample.grid.same_as(samples[0].grid)):
            raise ShapeMismatch('Fields are defined on different grids')


def _lineage(samples):
    lineage = []
    for sample in samples:
        lineage.extend(sample.lineage or ((sample.seed,) if sample.seed is not None else ()))
    return tuple(lineage)


def gamma_from_gaussians(samples):
    samples = list(samples)
    if len(samples) < 2 or len(samples) % 2:
        raise ShapeMismatch(f'A gamma field needs an even number (>= 2) of Gaussian fields, got {len(samples)}')
    _check_aligned(samples)
    values = 0.5 * np.sum([sample.values ** 2 for sample in samples], axis=0)
    return FieldSample(values=values, grid=samples[0].grid, lineage=_lineage(samples))


def beta_from_gammas(g, g_prime):
    _check_aligned([g, g_prime])
    if g.values.min() < 0.0 or g_prime.values.min() < 0.0:
        raise InvalidParameter('Gamma fields must be non-negative')
    total = g.values + g_prime.values
    if np.any(total == 0.0):
        raise DegenerateSite(f'{int(np.sum(total == 0.0))} sites have g + g\' = 0')
    values = np.clip(g.values / total, 0.0, 1.0)
    return FieldSample(values=values, grid=g.grid, lineage=_lineage([g, g_prime]))


def field_seeds(params, master, index):
    return tuple(stream_seed(master, index, r) for r in range(params.gaussians_per_field))


def beta_field_from_seeds(params, spec, grid, seeds, options=SamplerOptions(), factor=None):
    """Build one degradation field on ``grid`` from its 2s + 2s' Gaussian seeds."""
    if len(seeds) != params.gaussians_per_field:
        raise ShapeMismatch(f'Expected {params.gaussians_per_field} seeds, got {len(seeds)}')

    target = pixel_grid(options.highres) if options.method == SamplerMethod.FFT else grid
    gaussians = [draw_gaussian(spec, target, seed, options, factor=factor) for seed in seeds]
    split = 2 * params.s
    beta = beta_from_gammas(gamma_from_gaussians(gaussians[:split]), gamma_from_gaussians(gaussians[split:]))

    if options.method == SamplerMethod.FFT:
        return downsample_to_gauss_grid(beta, grid, seeds=seeds)
    return DegradationField(values=beta.values, grid=grid, seeds=seeds)


def sample_beta_fields(params, spec, pts, count, seed, options=SamplerOptions()):
    factor = cholesky_factor(spec, pts) if options.method == SamplerMethod.CHOLESKY and count else None
    return [
        beta_field_from_seeds(params, spec, pts, field_seeds(params, seed, j), options, factor=factor)
        for j in range(int(count))
    ]


def regenerate_field(field, params, spec, options=SamplerOptions()):
    return beta_field_from_seeds(params, spec, field.grid, field.seeds, options)


def gamma_covariance(spec, lag, s=1):
    return s * kernel_from_distance(spec, lag) ** 2


def _beta_correlation_scalar(a, t):
    if a <= 0.0:
        return 0.0
    if a >= 1.0:
        return 1.0
    q = -a / (1.0 - a)
    if a < SERIES_LIMIT:
        # 1 - t q^-t Σ_{l>=t} q^l / l, expanded around q = 0
        total, term, j = 0.0, 1.0, 1
        while True:
            term *= q
            contribution = t * term / (t + j)
            total -= contribution
            if abs(contribution) < 1e-17 or j > 500:
                return total
            j += 1
    partial = sum((q ** l) / l for l in range(1, t))
    return 1.0 - t * ((1.0 - a) / (-a)) ** t * (math.log(1.0 - a) - partial)


def beta_correlation(spec, params, lag, argument='gamma'):
    """Correlation of the beta field at ``lag``.

    ``argument='gamma'`` feeds the closed form with the correlation of the
    underlying gamma fields, (k/ς²)²; ``'gaussian'`` feeds it with k/ς².
    """
    rho = np.asarray(correlation(spec, lag), dtype=np.float64)
    if argument == 'gamma':
        a = rho ** 2
    elif argument == 'gaussian':
        a = rho
    else:
        raise InvalidParameter(f'Unknown correlation argument {argument!r}')
    t = params.s + params.s_prime
    result = np.vectorize(lambda value: _beta_correlation_scalar(float(value), t), otypes=[np.float64])(a)
    return float(result) if result.ndim == 0 else result


def beta_marginal_pdf(params, beta):
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(beta < 0.0) or np.any(beta > 1.0):
        raise OutOfSupport('Beta density is supported on [0, 1]')
    density = stats.beta(params.s, params.s_prime).pdf(beta)
    return float(density) if density.ndim == 0 else density


def nearest_pixel_indices(highres_grid, gauss_grid):
    indices = []
    for axis, targets in ((highres_grid.axis1, gauss_grid.axis1), (highres_grid.axis2, gauss_grid.axis2)):
        step = axis[1] - axis[0] if axis.size > 1 else 1.0
        lower = axis[0] - 0.5 * step
        upper = axis[-1] + 0.5 * step
        if targets.min() < lower or targets.max() > upper:
            raise OutOfDomain(f'Gauss points outside the field extent [{lower}, {upper}]')
        indices.append(np.clip(np.floor((targets - lower) / step).astype(int), 0, axis.size - 1))
    return indices


def downsample_to_gauss_grid(highres, gauss_pts, seeds=None):
    if highres.grid is None:
        raise ShapeMismatch('Down-sampling needs a field sampled on a grid')
    i1, i2 = nearest_pixel_indices(highres.grid, gauss_pts)
    values = highres.values[np.ix_(i1, i2)]
    return DegradationField(values=values, grid=gauss_pts, seeds=highres.lineage if seeds is None else seeds)
