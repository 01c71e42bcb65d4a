import logging
import math
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import stats

from fiberuq.exceptions import InvalidParameter, ShapeMismatch, TooFewSamples

logger = logging.getLogger(__name__)

DEFAULT_PROBE = (10, 20)
DEFAULT_THRESHOLD_COUNT = 101


class Source(models.TextChoices):
    FE = 'fe', 'Finite element reference'
    SURROGATE = 'surrogate', 'Surrogate ensemble'


@dataclass(frozen=True, eq=False)
class PredictiveSample:
    source: str
    index: int
    values: np.ndarray
    particle: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise InvalidParameter(f'Sample {self.index} holds non-finite stresses')
        if self.source not in Source.values:
            raise InvalidParameter(f'Unknown sample source {self.source!r}')
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True)
class Moments:
    mean: float
    std: float
    var: float
    cov: float | None = None
    n: int = 0


@dataclass(frozen=True, eq=False)
class SitePosterior:
    site: tuple
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    std: float
    values: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    def density(self):
        widths = np.diff(self.edges)
        return self.counts / (self.n * widths)


@dataclass(frozen=True, eq=False)
class ExceedanceCurve:
    thresholds: np.ndarray
    local: np.ndarray
    global_: np.ndarray
    n: int


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    thresholds: np.ndarray
    probabilities: np.ndarray


def stack_samples(samples):
    """``(n, h, w)`` array from PredictiveSamples or any array-like stack."""
    if len(samples) and isinstance(samples[0], PredictiveSample):
        values = np.stack([sample.values for sample in samples])
    else:
        values = np.asarray(samples, dtype=np.float64)
    if values.ndim != 3:
        raise ShapeMismatch(f'Expected a stack of 2-D stress maps, got shape {values.shape}')
    return values


def site_index(site, shape):
    """0-based array index of a 1-based (u, v) probe."""
    u, v = (int(k) for k in site)
    if not (1 <= u <= shape[0] and 1 <= v <= shape[1]):
        raise InvalidParameter(f'Probe {site} lies outside the {shape[0]}×{shape[1]} map')
    return u - 1, v - 1


def site_values(samples, site):
    values = stack_samples(samples)
    i, j = site_index(site, values.shape[1:])
    return values[:, i, j]


def _require(n, minimum=2):
    if n < minimum:
        raise TooFewSamples(f'At least {minimum} accepted samples are needed, got {n}')


def _exact_mean(values):
    return math.fsum(values) / len(values)


def _exact_var(values, mean):
    return math.fsum((np.asarray(values) - mean) ** 2) / (len(values) - 1)


def moments(samples, site, other=None):
    """Unbiased mean, standard deviation and variance at ``site``; covariance with ``other`` if given."""
    x = site_values(samples, site)
    _require(x.size)
    mean = _exact_mean(x)
    var = _exact_var(x, mean)
    cov = None
    if other is not None:
        y = site_values(samples, other)
        cov = covariance(x, y)
    return Moments(mean=mean, std=math.sqrt(var), var=var, cov=cov, n=int(x.size))


def covariance(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch('Covariance needs paired samples')
    _require(x.size)
    return math.fsum((x - _exact_mean(x)) * (y - _exact_mean(y))) / (x.size - 1)


def moment_maps(samples):
    """Per-site mean, standard deviation and variance maps."""
    values = stack_samples(samples)
    _require(values.shape[0])
    flat = values.reshape(values.shape[0], -1)
    mean = np.array([_exact_mean(column) for column in flat.T])
    var = np.array([_exact_var(column, m) for column, m in zip(flat.T, mean)])
    shape = values.shape[1:]
    return mean.reshape(shape), np.sqrt(var).reshape(shape), var.reshape(shape)


def aggregate_site_pdf(samples, site=DEFAULT_PROBE, bins='fd'):
    x = site_values(samples, site)
    _require(x.size)
    edges = np.histogram_bin_edges(x, bins=bins)
    counts, edges = np.histogram(x, bins=edges)
    mean = _exact_mean(x)
    return SitePosterior(
        site=tuple(site),
        edges=edges,
        counts=counts,
        mean=mean,
        std=math.sqrt(_exact_var(x, mean)),
        values=np.sort(x),
    )


def _check_thresholds(thresholds):
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
    if thresholds.ndim != 1 or np.any(np.diff(thresholds) < 0):
        raise InvalidParameter('Thresholds must be a sorted 1-D list')
    return thresholds


class ExceedanceCounter:
    """Streaming counts of ``σ > threshold`` per site; partial counters merge exactly."""

    def __init__(self, thresholds, shape):
        self.thresholds = _check_thresholds(thresholds)
        self.shape = tuple(shape)
        self.counts = np.zeros((self.thresholds.size, *self.shape), dtype=np.int64)
        self.n = 0

    def update(self, samples):
        values = stack_samples(samples)
        if values.shape[1:] != self.shape:
            raise ShapeMismatch(f'Samples of shape {values.shape[1:]} do not match {self.shape}')
        for values_map in values:
            self.counts += values_map[None] > self.thresholds[:, None, None]
        self.n += values.shape[0]
        return self

    def merge(self, other):
        if not np.array_equal(self.thresholds, other.thresholds) or self.shape != other.shape:
            raise ShapeMismatch('Only counters over the same thresholds and map can be merged')
        merged = ExceedanceCounter(self.thresholds, self.shape)
        merged.counts = self.counts + other.counts
        merged.n = self.n + other.n
        return merged

    def curve(self):
        _require(self.n, 1)
        local = self.counts / self.n
        return ExceedanceCurve(
            thresholds=self.thresholds,
            local=local,
            global_=local.reshape(self.thresholds.size, -1).mean(axis=1),
            n=self.n,
        )


def exceedance(samples, thresholds):
    """Local and global probabilities that σ exceeds each threshold."""
    values = stack_samples(samples)
    return ExceedanceCounter(thresholds, values.shape[1:]).update(values).curve()


def survival_curve(values, thresholds=None):
    """Empirical P(X > s), right-continuous; evaluated at the sample values when no thresholds are given."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise TooFewSamples('A survival curve needs at least one sample')
    thresholds = np.unique(values) if thresholds is None else _check_thresholds(thresholds)
    above = values.size - np.searchsorted(values, thresholds, side='right')
    return SurvivalCurve(thresholds=thresholds, probabilities=above / values.size)


def inverse_cdf_curve(posterior, thresholds=None):
    return survival_curve(posterior.values, thresholds)


def mixture_survival(centres, scale, df, thresholds):
    """P(X > s) for an equal-weight mixture of Student-t kernels centred on ``centres``."""
    centres = np.asarray(centres, dtype=np.float64).ravel()
    if centres.size == 0:
        raise TooFewSamples('A survival curve needs at least one sample')
    thresholds = _check_thresholds(thresholds)
    if not scale > 0:
        return survival_curve(centres, thresholds)
    tails = stats.t.sf((thresholds[:, None] - centres[None, :]) / scale, df)
    return SurvivalCurve(thresholds=thresholds, probabilities=tails.mean(axis=1))


def mixture_quantiles(centres, scale, df, probabilities, rel_tol=1e-3):
    """Quantiles of the equal-weight Student-t mixture over the first axis of ``centres``.

    Returns an array of shape ``(len(probabilities), *centres.shape[1:])``;
    without a kernel width these are empirical quantiles of the centres.
    """
    centres = np.asarray(centres, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if centres.shape[0] == 0:
        raise TooFewSamples('A mixture needs at least one centre')
    if np.any((probabilities <= 0.0) | (probabilities >= 1.0)):
        raise InvalidParameter('Quantile levels must lie strictly between 0 and 1')
    if not scale > 0:
        return np.quantile(centres, probabilities, axis=0)

    target = probabilities.reshape(-1, *([1] * (centres.ndim - 1)))
    offsets = scale * stats.t.ppf(target, df)
    # every component has F <= p at the lower end and F >= p at the upper end
    lower = centres.min(axis=0)[None] + offsets
    upper = centres.max(axis=0)[None] + offsets
    for _ in range(100):
        if np.max(upper - lower) <= rel_tol * scale:
            break
        middle = 0.5 * (lower + upper)
        below = stats.t.cdf((middle[:, None] - centres[None]) / scale, df).mean(axis=1) < target
        lower = np.where(below, middle, lower)
        upper = np.where(below, upper, middle)
    return 0.5 * (lower + upper)


def default_thresholds(*sample_sets, count=DEFAULT_THRESHOLD_COUNT):
    """Evenly spaced thresholds over the pooled range of all given samples."""
    pooled = np.concatenate([np.asarray(values, dtype=np.float64).ravel() for values in sample_sets])
    if pooled.size == 0:
        raise TooFewSamples('No samples to span thresholds over')
    return np.linspace(pooled.min(), pooled.max(), count)


@dataclass(frozen=True, eq=False)
class SurrogateAggregate:
    """Surrogate predictions of ``n_samples`` fields by ``n_particles`` networks.

    Every (field, particle) pair carries the weight 1/(n_samples n_particles);
    with ``scale > 0`` each point prediction is widened by the Student-t
    observation kernel with ``df`` degrees of freedom.
    """

    predictions: np.ndarray
    scale: float = 0.0
    df: float = 4.0

    def __post_init__(self):
        predictions = np.asarray(self.predictions, dtype=np.float64)
        if predictions.ndim != 4:
            raise ShapeMismatch(f'Expected (samples, particles, h, w) predictions, got {predictions.shape}')
        object.__setattr__(self, 'predictions', predictions)

    @classmethod
    def from_posterior(cls, predictions, posterior, normalization, smoothed=True):
        scale = math.sqrt(posterior.b1 / posterior.a1) * normalization.std if smoothed else 0.0
        return cls(predictions=predictions, scale=scale, df=2.0 * posterior.a1)

    @property
    def n_samples(self):
        return self.predictions.shape[0]

    @property
    def n_particles(self):
        return self.predictions.shape[1]

    def flat(self):
        return self.predictions.reshape(-1, *self.predictions.shape[2:])

    def site_survival(self, site, thresholds):
        return mixture_survival(site_values(self.flat(), site), self.scale, self.df, thresholds)

    def credible_intervals(self, levels):
        """Central credible bounds per field and pixel, each of shape (levels, samples, h, w)."""
        levels = np.asarray(levels, dtype=np.float64)
        probabilities = np.concatenate([(1.0 - levels) / 2.0, (1.0 + levels) / 2.0])
        bounds = np.stack([
            mixture_quantiles(particles, self.scale, self.df, probabilities)
            for particles in self.predictions
        ], axis=1)
        return bounds[:levels.size], bounds[levels.size:]

    def metadata(self):
        return {
            'source': Source.SURROGATE.value,
            'n_samples': self.n_samples,
            'n_particles': self.n_particles,
            'sample_weight': 1.0 / self.n_samples,
            'particle_weight': 1.0 / self.n_particles,
        }
