import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from django.db import models

from fiberuq.exceptions import InvalidParameter, ShapeMismatch
from randomfields.rng import make_rng, stream_seed
from .network import DTYPE, FunctionalNetwork, NetworkConfig
from .svgd import PosteriorConfig, particle_objective, svgd_step

logger = logging.getLogger(__name__)

# stream keys below the master seed
INIT_STREAM = 3
SHUFFLE_STREAM = 4


class Initialisation(models.TextChoices):
    DEFAULT = 'default', 'Framework initialisation per particle'
    PRIOR = 'prior', 'Draw from the weight prior'


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 64
    epochs: int = 200
    learning_rate: float = 0.03
    eta_min: float = 0.0
    restart_period: int = 20
    n_particles: int = 20
    init: str = Initialisation.DEFAULT
    posterior: PosteriorConfig = PosteriorConfig()

    def __post_init__(self):
        for name in ('batch_size', 'epochs', 'restart_period'):
            if getattr(self, name) < 1:
                raise InvalidParameter(f'{name} must be >= 1, got {getattr(self, name)}')
        if self.n_particles < 2:
            raise InvalidParameter(f'SVGD needs at least two particles, got {self.n_particles}')
        if not self.learning_rate > 0 or self.eta_min < 0:
            raise InvalidParameter('Learning rates must be positive')
        if self.init not in Initialisation.values:
            raise InvalidParameter(f'Unknown initialisation {self.init!r}')

    @classmethod
    def full_scale(cls):
        return cls(batch_size=350, epochs=500, learning_rate=0.03, n_particles=20)


@dataclass(frozen=True)
class Normalization:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise InvalidParameter(f'Normalization std must be positive, got {self.std}')

    @classmethod
    def fit(cls, targets):
        targets = np.asarray(targets, dtype=np.float64)
        std = float(targets.std())
        return cls(mean=float(targets.mean()), std=std if std > 0 else 1.0)

    def normalize(self, values):
        return (values - self.mean) / self.std

    def denormalize(self, values):
        return values * self.std + self.mean


@dataclass(frozen=True, eq=False)
class SurrogateDataset:
    inputs: np.ndarray
    targets: np.ndarray
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.shape != targets.shape or inputs.ndim != 3:
            raise ShapeMismatch(f'Inputs {inputs.shape} and targets {targets.shape} must be equal (n, h, w) stacks')
        splits = {name: np.asarray(index, dtype=np.int64) for name, index in self.splits.items()}
        seen = np.concatenate(list(splits.values())) if splits else np.empty(0, dtype=np.int64)
        if np.unique(seen).size != seen.size:
            raise InvalidParameter('Dataset splits overlap')
        if seen.size and (seen.min() < 0 or seen.max() >= inputs.shape[0]):
            raise InvalidParameter('Dataset split index out of range')
        object.__setattr__(self, 'inputs', inputs)
        object.__setattr__(self, 'targets', targets)
        object.__setattr__(self, 'splits', splits)

    def __len__(self):
        return self.inputs.shape[0]

    def split(self, name):
        index = self.splits.get(name)
        if index is None:
            raise InvalidParameter(f'Dataset has no {name!r} split')
        return self.inputs[index], self.targets[index]


@dataclass(eq=False)
class ParticleEnsemble:
    network_config: NetworkConfig
    particles: torch.Tensor
    normalization: Normalization = Normalization()
    posterior: PosteriorConfig = PosteriorConfig()

    def __post_init__(self):
        self.network = FunctionalNetwork(self.network_config)
        if self.particles.ndim != 2 or self.particles.shape[1] != self.network.n_params:
            raise ShapeMismatch(
                f'Particles of shape {tuple(self.particles.shape)} do not fit {self.network.n_params} weights'
            )

    @property
    def size(self):
        return self.particles.shape[0]

    @property
    def weights(self):
        return np.full(self.size, 1.0 / self.size)


@dataclass(eq=False)
class TrainingState:
    """Everything needed to continue training exactly where it stopped."""

    particles: torch.Tensor
    exp_avg: torch.Tensor
    exp_avg_sq: torch.Tensor
    step: float
    epoch: int
    log: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class EnsemblePrediction:
    particles: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def initial_particles(network, cfg, seed):
    particles = []
    for index in range(cfg.n_particles):
        particle_seed = stream_seed(seed, INIT_STREAM, index)
        if cfg.init == Initialisation.PRIOR:
            rng = make_rng(particle_seed)
            precision = rng.gamma(cfg.posterior.a0, 1.0 / cfg.posterior.b0)
            weights = rng.standard_normal(network.n_params) / math.sqrt(precision)
            particles.append(torch.as_tensor(weights, dtype=DTYPE))
        else:
            particles.append(network.initial_weights(particle_seed))
    return torch.stack(particles)


def _predict_normalised(network, particles, inputs, batch_size=256):
    outputs = []
    with torch.no_grad():
        for weights in particles:
            chunks = [network.forward(weights, inputs[start:start + batch_size])
                      for start in range(0, inputs.shape[0], batch_size)]
            outputs.append(torch.cat(chunks))
    return torch.stack(outputs)


def _mean_squared_error(network, particles, inputs, targets):
    if inputs.shape[0] == 0:
        return math.nan
    predictions = _predict_normalised(network, particles, inputs).mean(dim=0)
    return float(((predictions - targets) ** 2).mean())


def _optimizer(particles, cfg):
    optimizer = torch.optim.Adam([particles], lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(
        optimizer, T_0=cfg.restart_period, eta_min=cfg.eta_min,
    )
    return optimizer, scheduler


def _restore_optimizer(optimizer, state):
    saved = optimizer.state_dict()
    saved['state'] = {0: {
        'step': torch.tensor(float(state.step)),
        'exp_avg': state.exp_avg.clone(),
        'exp_avg_sq': state.exp_avg_sq.clone(),
    }}
    optimizer.load_state_dict(saved)


def _restore_schedule(optimizer, scheduler, cfg, epoch):
    """Put the cosine schedule where it stands at the start of ``epoch``."""
    position = epoch % cfg.restart_period
    rate = cfg.eta_min + (cfg.learning_rate - cfg.eta_min) * (1 + math.cos(math.pi * position / cfg.restart_period)) / 2
    state = scheduler.state_dict()
    state.update(last_epoch=epoch, T_cur=position, _last_lr=[rate])
    scheduler.load_state_dict(state)
    for group in optimizer.param_groups:
        group['lr'] = rate


def _snapshot(optimizer, particles, epoch, log):
    adam = optimizer.state.get(particles, {})
    return TrainingState(
        particles=particles.detach().clone(),
        exp_avg=adam.get('exp_avg', torch.zeros_like(particles)).detach().clone(),
        exp_avg_sq=adam.get('exp_avg_sq', torch.zeros_like(particles)).detach().clone(),
        step=float(adam.get('step', 0.0)),
        epoch=epoch,
        log=list(log),
    )


def train(dataset, network_config, cfg, seed, resume=None, stop_after=None, on_epoch=None):
    """Mini-batched SVGD over the ``train`` split.

    Returns ``(ensemble, state)``; ``state.log`` has one row per epoch with
    the training loss, the validation loss (normalised units) and the
    learning rate. ``resume`` continues from a saved TrainingState and
    ``stop_after`` ends early after that many epochs in total.
    """
    network = FunctionalNetwork(network_config)
    train_inputs, train_targets = dataset.split('train')
    if train_inputs.shape[0] == 0:
        raise InvalidParameter('The train split is empty')
    normalization = Normalization.fit(train_targets)
    x_train = torch.as_tensor(train_inputs, dtype=DTYPE)
    y_train = torch.as_tensor(normalization.normalize(train_targets), dtype=DTYPE)

    if 'validation' in dataset.splits:
        val_inputs, val_targets = dataset.split('validation')
    else:
        val_inputs, val_targets = train_inputs[:0], train_targets[:0]
    x_val = torch.as_tensor(val_inputs, dtype=DTYPE)
    y_val = torch.as_tensor(normalization.normalize(val_targets), dtype=DTYPE)

    if resume is None:
        particles = torch.nn.Parameter(initial_particles(network, cfg, seed))
        start_epoch, log = 0, []
    else:
        if resume.particles.shape[1] != network.n_params:
            raise ShapeMismatch('Checkpoint particles do not match the network configuration')
        particles = torch.nn.Parameter(resume.particles.clone())
        start_epoch, log = resume.epoch, list(resume.log)
    optimizer, scheduler = _optimizer(particles, cfg)
    if resume is not None:
        _restore_optimizer(optimizer, resume)
        _restore_schedule(optimizer, scheduler, cfg, start_epoch)

    n_total = x_train.shape[0]
    last_epoch = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start_epoch, last_epoch):
        rate = optimizer.param_groups[0]['lr']
        order = make_rng(stream_seed(seed, SHUFFLE_STREAM, epoch)).permutation(n_total)
        batch_losses = []
        for start in range(0, n_total, cfg.batch_size):
            index = torch.as_tensor(order[start:start + cfg.batch_size])
            inputs, targets = x_train[index], y_train[index]
            scores, predictions = [], []
            for weights in particles.detach():
                _, gradient, prediction = particle_objective(network, weights, inputs, targets, n_total,
                                                             cfg.posterior)
                scores.append(gradient)
                predictions.append(prediction)
            svgd_step(particles, torch.stack(scores), optimizer)
            ensemble_mean = torch.stack(predictions).mean(dim=0)
            batch_losses.append(float(((ensemble_mean - targets) ** 2).mean()))

        row = {
            'epoch': epoch + 1,
            'train_loss': float(np.mean(batch_losses)),
            'validation_loss': _mean_squared_error(network, particles.detach(), x_val, y_val),
            'learning_rate': rate,
        }
        log.append(row)
        scheduler.step()
        logger.info(
            f'Epoch {row["epoch"]}/{cfg.epochs}: train loss {row["train_loss"]:.5f}, '
            f'validation loss {row["validation_loss"]:.5f}, lr {rate:.5f}'
        )
        if on_epoch is not None:
            on_epoch(_snapshot(optimizer, particles, epoch + 1, log))

    ensemble = ParticleEnsemble(
        network_config=network_config,
        particles=particles.detach().clone(),
        normalization=normalization,
        posterior=cfg.posterior,
    )
    return ensemble, _snapshot(optimizer, particles, max(start_epoch, last_epoch), log)


def predict_ensemble(ensemble, fields):
    """Per-particle σ₃₃ maps, their mean and the predictive standard deviation in kPa."""
    fields = np.asarray(fields, dtype=np.float64)
    single = fields.ndim == 2
    inputs = torch.as_tensor(fields[None] if single else fields, dtype=DTYPE)
    normalised = _predict_normalised(ensemble.network, ensemble.particles, inputs).numpy()
    particles = ensemble.normalization.denormalize(normalised)
    mean = particles.mean(axis=0)
    spread = particles.var(axis=0)
    observation = ensemble.posterior.observation_variance * ensemble.normalization.std ** 2
    std = np.sqrt(spread + observation)
    if single:
        particles, mean, std = particles[:, 0], mean[0], std[0]
    return EnsemblePrediction(particles=particles, mean=mean, std=std)


def evaluate(ensemble, inputs, targets):
    """Pooled pixelwise R², mean squared error and mean relative error of the mean prediction."""
    prediction = predict_ensemble(ensemble, inputs).mean
    targets = np.asarray(targets, dtype=np.float64)
    residual = ((prediction - targets) ** 2).sum()
    total = ((targets - targets.mean()) ** 2).sum()
    with np.errstate(divide='ignore', invalid='ignore'):
        relative = np.abs(prediction - targets) / np.abs(targets)
    return {
        'r2': float(1.0 - residual / total) if total > 0 else math.nan,
        'mse': float(((prediction - targets) ** 2).mean()),
        'mean_relative_error': float(np.nanmean(np.where(np.isfinite(relative), relative, np.nan))),
    }
