import numpy as np
import pandas as pd
import pytest

from core.config import load_config
from core.container import read_container
from core.pipeline import (_write_partial, assign_splits, error_type, generate_dataset, load_dataset, load_ensemble,
                           load_fields, load_predictions, predict, sample_fields, save_ensemble, save_fields,
                           split_samples, surrogate_aggregate, train_surrogate, uq_report)
from fiberuq.exceptions import ElementInversion, InvalidConfig, IOFailure, NonConvergence, OutOfDomain
from surrogate.training import Normalization, train
from .conftest import SMALL_RUN


@pytest.fixture(scope='module')
def cfg():
    return load_config(data=SMALL_RUN)


@pytest.fixture(scope='module')
def fields(cfg):
    fields, _ = sample_fields(cfg)
    return fields


@pytest.fixture(scope='module')
def dataset_path(cfg, fields, tmp_path_factory):
    path = tmp_path_factory.mktemp('dataset') / 'dataset.fuq'
    generate_dataset(cfg, fields, path)
    return path


@pytest.fixture(scope='module')
def ensemble_path(cfg, dataset_path):
    path = dataset_path.with_name('ensemble.fuq')
    train_surrogate(cfg, dataset_path, path, dataset_path.with_name('training_log.csv'))
    return path


def test_sample_fields_needs_seed():
    with pytest.raises(InvalidConfig):
        sample_fields(load_config(data=dict(SMALL_RUN, seed=None)))


def test_sample_fields(cfg, fields):
    assert [index for index, _ in fields] == list(range(6))
    for _, field in fields:
        assert field.values.shape == cfg.mesh.gauss_grid.shape
        assert np.all((field.values >= 0.0) & (field.values <= 1.0))
    _, operation_log = sample_fields(cfg)
    assert operation_log['successful'] == 6
    assert operation_log['failed'] == 0
    assert operation_log['batches_processed'] == 2


def test_fields_container_is_reproducible(cfg, fields, tmp_path):
    first = save_fields(tmp_path / 'a.fuq', cfg, fields)
    second = save_fields(tmp_path / 'b.fuq', cfg, sample_fields(cfg)[0])
    assert first.read_bytes() == second.read_bytes()

    header, loaded = load_fields(first)
    assert header['config_hash'] == cfg.config_hash()
    for (index, field), (loaded_index, loaded_field) in zip(fields, loaded):
        assert index == loaded_index
        assert tuple(loaded_field.seeds) == tuple(field.seeds)
        assert np.array_equal(loaded_field.values, field.values)


def test_load_fields_rejects_other_kinds(cfg, dataset_path):
    with pytest.raises(IOFailure):
        load_fields(dataset_path)


def test_assign_splits():
    assert assign_splits(6, {'train': 3, 'validation': 1, 'test': 2}) == {
        'train': [0, 1, 2], 'validation': [3], 'test': [4, 5],
    }
    short = assign_splits(4, {'train': 3, 'validation': 2, 'test': 2})
    assert short == {'train': [0, 1, 2], 'validation': [3], 'test': []}


def test_error_types():
    assert error_type(NonConvergence('stuck', load_factor=0.5)) == 'non_convergence'
    assert error_type(ElementInversion('inverted')) == 'element_inversion'
    assert error_type(OutOfDomain('J < 0')) == 'solver_error'


def test_dataset_container(cfg, fields, dataset_path):
    header, dataset = load_dataset(dataset_path)
    accepted = header['sample_indices']
    assert header['non_convergence'] == []
    assert accepted == list(range(6))
    assert sum(len(index) for index in header['splits'].values()) == len(accepted)
    assert header['config_hash'] == cfg.config_hash()
    assert not dataset_path.with_name('dataset.fuq.partial').exists()

    by_index = dict(fields)
    for position, index in enumerate(accepted):
        assert np.array_equal(dataset.inputs[position], by_index[index].values)
    assert np.all(np.isfinite(dataset.targets))
    assert np.all(dataset.targets > 0.0)

    normalization = Normalization.fit(dataset.split('train')[1])
    assert header['normalization'] == {'mean': normalization.mean, 'std': normalization.std}

    indices, inputs, targets = split_samples(header, dataset, 'test')
    assert indices == [4, 5]
    assert np.array_equal(targets, dataset.targets[4:6])


def test_generate_dataset_resumes_from_partial(cfg, fields, tmp_path):
    path = tmp_path / 'dataset.fuq'
    marker = np.full(cfg.mesh.gauss_grid.shape, 123.0)
    _write_partial(path, cfg, {0: marker}, [], marker.shape)

    operation_log = generate_dataset(cfg, fields[:3], path)
    _, arrays = read_container(path)
    assert np.array_equal(arrays['targets'][0], marker)
    assert not np.array_equal(arrays['targets'][1], marker)
    assert operation_log['successful'] == 3
    assert not path.with_name('dataset.fuq.partial').exists()


def test_partial_of_other_configuration_is_ignored(cfg, fields, tmp_path):
    path = tmp_path / 'dataset.fuq'
    other = load_config(data=dict(SMALL_RUN, seed=8))
    marker = np.full(cfg.mesh.gauss_grid.shape, 123.0)
    _write_partial(path, other, {0: marker}, [], marker.shape)

    generate_dataset(cfg, fields[:1], path)
    _, arrays = read_container(path)
    assert not np.array_equal(arrays['targets'][0], marker)


def test_failed_samples_are_logged_and_skipped(cfg, fields, tmp_path):
    failing = load_config(data=dict(SMALL_RUN, solver={'load_steps': 1, 'max_iterations': 1, 'min_step': 0.5}))
    operation_log = generate_dataset(failing, fields[:2], tmp_path / 'dataset.fuq')
    header, _ = read_container(tmp_path / 'dataset.fuq')
    assert operation_log['failed'] == 2
    assert operation_log['successful'] == 0
    assert [error['index'] for error in header['non_convergence']] == [0, 1]
    assert {error['type'] for error in header['non_convergence']} == {'non_convergence'}


def test_training_checkpoint_and_log(cfg, ensemble_path):
    header, ensemble, state = load_ensemble(ensemble_path)
    assert state.epoch == 2
    assert ensemble.size == 2
    assert header['config_hash'] == cfg.config_hash()
    log = pd.read_csv(ensemble_path.with_name('training_log.csv'))
    assert list(log.columns) == ['epoch', 'train_loss', 'validation_loss', 'learning_rate']
    assert log['epoch'].tolist() == [1, 2]


def test_training_resumes_identically(cfg, dataset_path, ensemble_path, tmp_path):
    _, dataset = load_dataset(dataset_path)
    ensemble, state = train(dataset, cfg.network_config(), cfg.training_config(), cfg.seed, stop_after=1)
    interrupted = tmp_path / 'ensemble.fuq'
    save_ensemble(interrupted, cfg, ensemble, state)

    resumed, operation_log = train_surrogate(cfg, dataset_path, interrupted, tmp_path / 'log.csv')
    _, uninterrupted, _ = load_ensemble(ensemble_path)
    assert operation_log['batches_processed'] == 1
    assert np.array_equal(resumed.particles.numpy(), uninterrupted.particles.numpy())


def test_predict_and_report(cfg, dataset_path, ensemble_path, tmp_path):
    header, dataset = load_dataset(dataset_path)
    indices, inputs, targets = split_samples(header, dataset, 'test')
    _, ensemble, _ = load_ensemble(ensemble_path)
    predict(cfg, ensemble, inputs, indices, tmp_path / 'predictions.fuq', targets=targets)

    prediction_header, arrays = load_predictions(tmp_path / 'predictions.fuq')
    assert prediction_header['sample_indices'] == indices
    assert arrays['particles'].shape == (2, 2, 4, 4)
    assert 'r2' in prediction_header['metrics']
    assert np.all(arrays['std'] > 0.0)

    surrogate = surrogate_aggregate(cfg, prediction_header, arrays['particles'])
    assert surrogate.n_samples == 2
    assert surrogate.n_particles == 2

    report_dir = tmp_path / 'report'
    written, summary = uq_report(cfg, targets, report_dir, surrogate=surrogate, references=targets)
    names = {path.name for path in written}
    assert names == {
        'moments.csv', 'histogram_1_2_fe.csv', 'histogram_1_2_surrogate.csv', 'survival_1_2.csv',
        'exceedance_local_fe.csv', 'exceedance_local_surrogate.csv', 'exceedance_global.csv',
        'aggregation.csv', 'reliability.csv',
    }
    assert 0.0 <= summary['accuracy'] <= 1.0

    moments = pd.read_csv(report_dir / 'moments.csv')
    assert list(moments.columns) == ['source', 'u', 'v', 'mean', 'std', 'var']
    assert len(moments) == 2 * 16

    survival = pd.read_csv(report_dir / 'survival_1_2.csv')
    assert list(survival.columns) == ['threshold', 'fe', 'surrogate']
    assert len(survival) == 11
    assert survival['fe'].is_monotonic_decreasing
    assert survival['surrogate'].is_monotonic_decreasing

    local = pd.read_csv(report_dir / 'exceedance_local_fe.csv')
    global_ = pd.read_csv(report_dir / 'exceedance_global.csv')
    per_threshold = local.groupby('threshold', sort=True)['probability'].mean().to_numpy()
    assert per_threshold == pytest.approx(global_['fe'].to_numpy(), abs=1e-12)

    aggregation = pd.read_csv(report_dir / 'aggregation.csv')
    assert aggregation['source'].tolist() == ['fe', 'surrogate']
    assert aggregation['particle_weight'].tolist() == [1.0, 0.5]

    reliability = pd.read_csv(report_dir / 'reliability.csv')
    assert list(reliability.columns) == ['nominal', 'empirical', 'standard_error']
    assert len(reliability) == 5


def test_fe_only_report_is_reproducible(cfg, dataset_path, tmp_path):
    header, dataset = load_dataset(dataset_path)
    _, _, targets = split_samples(header, dataset, 'test')
    first, summary = uq_report(cfg, targets, tmp_path / 'a')
    second, _ = uq_report(cfg, targets, tmp_path / 'b')
    assert summary is None
    assert 'reliability.csv' not in {path.name for path in first}
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    survival = pd.read_csv(tmp_path / 'a' / 'survival_1_2.csv')
    assert survival['surrogate'].isna().all()
