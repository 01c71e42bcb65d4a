from dataclasses import dataclass

import numpy as np
from scipy import stats

from fiberuq.exceptions import InvalidParameter, MismatchedPairs

DEFAULT_LEVELS = 30


@dataclass(frozen=True, eq=False)
class ReliabilityDiagram:
    nominal: np.ndarray
    empirical: np.ndarray
    standard_error: np.ndarray
    n: int

    @property
    def accuracy(self):
        """Largest empirical coverage over the evaluated levels."""
        return float(self.empirical.max())

    @property
    def calibration_error(self):
        return float(np.abs(self.empirical - self.nominal).max())


def credibility_levels(count=DEFAULT_LEVELS):
    if count < 1:
        raise InvalidParameter(f'Need at least one credibility level, got {count}')
    return np.arange(1, count + 1) / (count + 1)


def reliability_diagram(references, mean=None, std=None, samples=None, intervals=None, levels=DEFAULT_LEVELS):
    """Fraction of reference values inside central credible intervals.

    ``intervals`` gives precomputed ``(lower, upper)`` bounds with one row per
    level. Otherwise ``samples`` (with the ensemble on the first axis) give
    empirical quantiles, and ``mean`` and ``std`` Gaussian ``mean ± z std``.
    """
    references = np.asarray(references, dtype=np.float64)
    nominal = credibility_levels(levels) if np.isscalar(levels) else np.asarray(levels, dtype=np.float64)
    if np.any((nominal <= 0) | (nominal >= 1)):
        raise InvalidParameter('Credibility levels must lie strictly between 0 and 1')

    if intervals is not None:
        lower, upper = (np.asarray(bound, dtype=np.float64) for bound in intervals)
        expected = (nominal.size, *references.shape)
        if lower.shape != expected or upper.shape != expected:
            raise MismatchedPairs(f'Intervals {lower.shape} do not pair with references {expected}')
    elif samples is not None:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape[1:] != references.shape:
            raise MismatchedPairs(f'Predictions {samples.shape[1:]} do not pair with references {references.shape}')
        lower = np.quantile(samples, (1.0 - nominal) / 2.0, axis=0)
        upper = np.quantile(samples, (1.0 + nominal) / 2.0, axis=0)
    else:
        if mean is None or std is None:
            raise InvalidParameter('Either intervals, samples or mean and std are required')
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != references.shape or std.shape != references.shape:
            raise MismatchedPairs(f'Predictions {mean.shape} do not pair with references {references.shape}')
        z = stats.norm.ppf((1.0 + nominal) / 2.0).reshape(-1, *([1] * references.ndim))
        lower = mean[None] - z * std[None]
        upper = mean[None] + z * std[None]

    n = references.size
    if n == 0:
        raise MismatchedPairs('No prediction/reference pairs')
    inside = (references[None] >= lower) & (references[None] <= upper)
    empirical = inside.reshape(nominal.size, -1).mean(axis=1)
    return ReliabilityDiagram(
        nominal=nominal,
        empirical=empirical,
        standard_error=np.sqrt(nominal * (1.0 - nominal) / n),
        n=n,
    )
