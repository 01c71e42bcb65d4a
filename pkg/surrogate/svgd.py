import logging
import math
from dataclasses import dataclass

import torch

from fiberuq.exceptions import DegenerateEnsemble, InvalidParameter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PosteriorConfig:
    """Gamma hyper-priors of the noise precision (a1, b1) and the weight precision (a0, b0)."""

    a1: float = 2.0
    b1: float = 2e-6
    a0: float = 1.0
    b0: float = 0.05

    def __post_init__(self):
        for name in ('a1', 'b1', 'a0', 'b0'):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f'{name} must be positive, got {getattr(self, name)}')

    @property
    def observation_variance(self):
        """Variance of the Student-t observation noise; infinite for a1 <= 1."""
        return self.b1 / (self.a1 - 1.0) if self.a1 > 1.0 else math.inf


def _student_t_marginal(squared_sum, count, shape, rate):
    """log ∫ N(r | 0, 1/λ)^count Gamma(λ | shape, rate) dλ for residuals with sum of squares ``squared_sum``."""
    total_shape = shape + 0.5 * count
    constant = -0.5 * count * math.log(2.0 * math.pi * rate) + math.lgamma(total_shape) - math.lgamma(shape)
    return constant - total_shape * torch.log1p(squared_sum / (2.0 * rate))


def log_likelihood(predictions, targets, n_total, cfg):
    """Student-t marginal likelihood of a batch, scaled up to ``n_total`` samples.

    One noise precision is shared by every pixel of every sample in the
    batch and integrated out against Γ(a1, b1), so the batch contributes a
    single ``-(a1 + M/2) log(1 + L/(2 b1))`` term with ``M`` the number of
    pixels in the batch and ``L`` their summed squared error.
    """
    batch = predictions.shape[0]
    if batch == 0:
        raise InvalidParameter('A likelihood batch must not be empty')
    squared = (predictions - targets) ** 2
    value = _student_t_marginal(squared.sum(), squared.numel(), cfg.a1, cfg.b1)
    return (n_total / batch) * value


def log_prior(weights, cfg):
    """Marginal of N(0, 1/α) over all weights with one shared α ~ Γ(a0, b0)."""
    return _student_t_marginal(weights.pow(2).sum(), weights.numel(), cfg.a0, cfg.b0)


def particle_objective(network, weights, inputs, targets, n_total, cfg):
    weights = weights.detach().clone().requires_grad_(True)
    predictions = network.forward(weights, inputs)
    value = log_likelihood(predictions, targets, n_total, cfg) + log_prior(weights, cfg)
    (gradient,) = torch.autograd.grad(value, weights)
    return float(value.detach()), gradient.detach(), predictions.detach()


def log_posterior_grad(network, weights, inputs, targets, n_total, cfg):
    """Unnormalised log-posterior of one particle and its gradient."""
    value, gradient, _ = particle_objective(network, weights, inputs, targets, n_total, cfg)
    return value, gradient


def median_bandwidth(particles):
    distances = torch.cdist(particles, particles)
    n = particles.shape[0]
    off_diagonal = distances[~torch.eye(n, dtype=torch.bool)]
    return torch.median(off_diagonal)


def stein_direction(particles, scores):
    """Kernelised Stein direction for every particle.

    The kernel is exp(-d² log N / H²) with H the median pairwise distance; a
    single particle follows its score alone.
    """
    n = particles.shape[0]
    if n == 1:
        return scores.clone()
    bandwidth = median_bandwidth(particles)
    if not bandwidth > 0:
        raise DegenerateEnsemble('All particles coincide; the median bandwidth is zero')

    scale = math.log(n) / bandwidth ** 2
    differences = particles[:, None, :] - particles[None, :, :]
    kernel = torch.exp(-scale * (differences ** 2).sum(dim=-1))
    driving = kernel @ scores
    repulsive = 2.0 * scale * (kernel[:, :, None] * differences).sum(dim=1)
    return (driving + repulsive) / n


def svgd_step(particles, scores, optimizer):
    """One ascent step along the Stein direction through ``optimizer``.

    ``particles`` is the leaf tensor the optimizer owns; the direction is
    computed on a snapshot of all particles before any of them moves.
    """
    with torch.no_grad():
        direction = stein_direction(particles.detach(), scores)
    particles.grad = -direction
    optimizer.step()
    return direction
