import numpy as np
import pytest
import torch

from fiberuq.exceptions import InvalidParameter, ShapeMismatch
from surrogate.network import DTYPE, FunctionalNetwork, NetworkConfig
from surrogate.svgd import PosteriorConfig
from surrogate.training import (Initialisation, Normalization, ParticleEnsemble, SurrogateDataset, TrainingConfig,
                                evaluate, initial_particles, predict_ensemble, train)

SMALL = NetworkConfig(blocks=(1, 1, 1), growth_rate=2, initial_features=8)


@pytest.fixture(scope='module')
def dataset():
    rng = np.random.default_rng(21)
    inputs = rng.random((48, 20, 20))
    targets = 30.0 * inputs + 50.0
    splits = {'train': np.arange(32), 'validation': np.arange(32, 40), 'test': np.arange(40, 48)}
    return SurrogateDataset(inputs, targets, splits)


def _cfg(**overrides):
    options = dict(batch_size=8, epochs=10, n_particles=4, restart_period=20)
    options.update(overrides)
    return TrainingConfig(**options)


def test_dataset_validation():
    with pytest.raises(ShapeMismatch):
        SurrogateDataset(np.zeros((3, 20, 20)), np.zeros((2, 20, 20)))
    with pytest.raises(InvalidParameter):
        SurrogateDataset(np.zeros((3, 20, 20)), np.zeros((3, 20, 20)), {'train': [0, 1], 'test': [1]})
    with pytest.raises(InvalidParameter):
        SurrogateDataset(np.zeros((3, 20, 20)), np.zeros((3, 20, 20)), {'train': [3]})


def test_normalization_inverts_exactly():
    targets = np.array([1.0, 2.0, 4.0, 8.0])
    normalization = Normalization.fit(targets)
    assert np.allclose(normalization.denormalize(normalization.normalize(targets)), targets, rtol=0, atol=1e-14)
    assert Normalization.fit(np.full(3, 5.0)).std == 1.0


def test_full_scale_operating_point():
    cfg = TrainingConfig.full_scale()
    assert (cfg.batch_size, cfg.epochs, cfg.learning_rate, cfg.n_particles) == (350, 500, 0.03, 20)


def test_training_needs_two_particles():
    with pytest.raises(InvalidParameter):
        _cfg(n_particles=1)
    assert _cfg(n_particles=2).n_particles == 2


@pytest.mark.parametrize('init', Initialisation.values)
def test_initial_particles_are_distinct_and_seeded(init):
    network = FunctionalNetwork(SMALL)
    cfg = _cfg(init=init)
    first = initial_particles(network, cfg, 5)
    assert first.shape == (4, network.n_params)
    assert torch.equal(first, initial_particles(network, cfg, 5))
    assert torch.cdist(first, first)[~torch.eye(4, dtype=torch.bool)].min() > 0


def test_training_loss_decreases(dataset):
    _, state = train(dataset, SMALL, _cfg(), seed=3)
    losses = [row['train_loss'] for row in state.log]
    assert len(losses) == 10
    violations = sum(b >= a for a, b in zip(losses, losses[1:]))
    assert violations <= 2
    assert all(np.isfinite(row['validation_loss']) for row in state.log)
    assert state.log[0]['learning_rate'] == pytest.approx(0.03)


def test_training_is_deterministic(dataset):
    first, first_state = train(dataset, SMALL, _cfg(epochs=3), seed=4)
    second, second_state = train(dataset, SMALL, _cfg(epochs=3), seed=4)
    assert torch.equal(first.particles, second.particles)
    assert first_state.log == second_state.log


def test_resume_continues_identically(dataset):
    cfg = _cfg(epochs=4)
    straight, straight_state = train(dataset, SMALL, cfg, seed=9)
    _, halfway = train(dataset, SMALL, cfg, seed=9, stop_after=2)
    assert halfway.epoch == 2
    resumed, resumed_state = train(dataset, SMALL, cfg, seed=9, resume=halfway)
    assert torch.equal(straight.particles, resumed.particles)
    assert straight_state.log == resumed_state.log


def test_learning_rate_restarts(dataset):
    _, state = train(dataset, SMALL, _cfg(epochs=5, restart_period=2, n_particles=2), seed=1)
    rates = [row['learning_rate'] for row in state.log]
    assert rates[0] == pytest.approx(0.03)
    assert rates[1] == pytest.approx(0.015)
    assert rates[2] == pytest.approx(0.03)


def test_resume_keeps_the_schedule_across_restarts(dataset):
    cfg = _cfg(epochs=5, restart_period=2, n_particles=2)
    _, straight = train(dataset, SMALL, cfg, seed=2)
    _, halfway = train(dataset, SMALL, cfg, seed=2, stop_after=3)
    _, resumed = train(dataset, SMALL, cfg, seed=2, resume=halfway)
    assert [row['learning_rate'] for row in resumed.log] == [row['learning_rate'] for row in straight.log]
    assert resumed.log[3]['learning_rate'] == pytest.approx(0.015)


def test_identical_particles_have_observation_spread_only():
    network = FunctionalNetwork(SMALL)
    weights = network.initial_weights(0)
    normalization = Normalization(mean=10.0, std=4.0)
    posterior = PosteriorConfig(a1=3.0, b1=0.02)
    ensemble = ParticleEnsemble(SMALL, torch.stack([weights, weights, weights]), normalization, posterior)
    prediction = predict_ensemble(ensemble, np.random.default_rng(0).random((20, 20)))
    assert prediction.particles.shape == (3, 20, 20)
    assert np.allclose(prediction.std, np.sqrt(0.01) * 4.0)
    single = normalization.denormalize(network.forward(weights, np.zeros((1, 20, 20)))).numpy()
    zero = predict_ensemble(ensemble, np.zeros((1, 20, 20)))
    assert np.allclose(zero.mean, single)


def test_mean_is_particle_average():
    network = FunctionalNetwork(SMALL)
    particles = torch.stack([network.initial_weights(seed) for seed in range(3)])
    ensemble = ParticleEnsemble(SMALL, particles)
    prediction = predict_ensemble(ensemble, np.random.default_rng(1).random((2, 20, 20)))
    assert np.allclose(prediction.mean, prediction.particles.mean(axis=0), rtol=0, atol=1e-14)
    assert np.all(prediction.std ** 2 >= prediction.particles.var(axis=0))
    assert np.allclose(ensemble.weights, 1 / 3)


def test_ensemble_checks_particle_width():
    with pytest.raises(ShapeMismatch):
        ParticleEnsemble(SMALL, torch.zeros((2, 5), dtype=DTYPE))


@pytest.mark.slow
def test_linear_map_is_learned(dataset):
    ensemble, _ = train(dataset, SMALL, _cfg(epochs=60), seed=2)
    inputs, targets = dataset.split('test')
    assert evaluate(ensemble, inputs, targets)['r2'] >= 0.8
