import json
import logging
import multiprocessing
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from fesolver.solver import solve_uniaxial
from fiberuq.exceptions import ElementInversion, FiberUQError, IOFailure, NonConvergence, ShapeMismatch
from randomfields.grids import Grid
from randomfields.samplers import SamplerMethod, cholesky_factor
from randomfields.transforms import DegradationField, beta_field_from_seeds, field_seeds
from surrogate.network import NetworkConfig
from surrogate.svgd import PosteriorConfig
from surrogate.training import (Normalization, ParticleEnsemble, SurrogateDataset, TrainingState, evaluate,
                                predict_ensemble, train)
from uq.aggregation import (ExceedanceCounter, Source, SurrogateAggregate, aggregate_site_pdf, default_thresholds,
                            moment_maps, site_index, survival_curve)
from uq.reliability import credibility_levels, reliability_diagram
from .config import RunConfig
from .container import read_container, write_container

logger = logging.getLogger(__name__)

SPLIT_NAMES = ('train', 'validation', 'test')


def new_operation_log(total, batch_size):
    return {
        'total_processed': total,
        'successful': 0,
        'failed': 0,
        'errors': [],
        'accepted': [],
        'batches_processed': 0,
        'batch_size': batch_size,
    }


def error_type(error):
    if isinstance(error, NonConvergence):
        return 'non_convergence'
    if isinstance(error, ElementInversion):
        return 'element_inversion'
    return 'solver_error'


def _header(cfg, kind, **extra):
    header = {'kind': kind, 'config': json.loads(cfg.snapshot()), 'config_hash': cfg.config_hash()}
    header.update(extra)
    return header


def _check_kind(header, kind, path):
    if header.get('kind') != kind:
        raise IOFailure(f'{path} holds {header.get("kind")!r} data, expected {kind!r}')


def _grid_header(grid):
    return {'axis1': grid.axis1.tolist(), 'axis2': grid.axis2.tolist()}


def _grid_from_header(section):
    return Grid(np.array(section['axis1']), np.array(section['axis2']))


# degradation fields

def sample_fields(cfg):
    """Draw ``count`` beta fields on the mesh Gauss grid; failed draws are logged and skipped."""
    seed = cfg.require_seed()
    count = cfg['count']
    batch_size = cfg['pipeline']['batch_size']
    params, spec, options = cfg.beta_params(), cfg.covariance_spec(), cfg.sampler_options()
    grid = cfg.mesh.gauss_grid
    operation_log = new_operation_log(count, batch_size)
    factor = cholesky_factor(spec, grid) if options.method == SamplerMethod.CHOLESKY else None

    fields = []
    for start in range(0, count, batch_size):
        for index in range(start, min(start + batch_size, count)):
            try:
                field = beta_field_from_seeds(params, spec, grid, field_seeds(params, seed, index), options, factor)
                fields.append((index, field))
                operation_log['successful'] += 1
                operation_log['accepted'].append(index)
            except FiberUQError as e:
                operation_log['failed'] += 1
                operation_log['errors'].append({'index': index, 'error': str(e), 'type': 'sampling_error'})
        operation_log['batches_processed'] += 1
        logger.info(f'Sampled fields {start + 1}-{min(start + batch_size, count)} of {count}')
    return fields, operation_log


def save_fields(path, cfg, fields):
    header = _header(
        cfg, 'fields',
        indices=[index for index, _ in fields],
        seeds=[list(field.seeds) for _, field in fields],
        grid=_grid_header(cfg.mesh.gauss_grid),
    )
    values = np.stack([field.values for _, field in fields]) if fields else np.empty((0, *cfg.mesh.gauss_grid.shape))
    return write_container(path, header, {'fields': values})


def load_fields(path):
    header, arrays = read_container(path)
    _check_kind(header, 'fields', path)
    grid = _grid_from_header(header['grid'])
    fields = [
        (index, DegradationField(values=values, grid=grid, seeds=seeds))
        for index, seeds, values in zip(header['indices'], header['seeds'], arrays['fields'])
    ]
    return header, fields


# finite element dataset

_WORKER = {}


def _init_worker(data):
    cfg = RunConfig(data)
    _WORKER.update(
        mesh=cfg.mesh,
        bc=cfg.boundary_conditions(),
        params=cfg.material_params(),
        dispersion=cfg.dispersion,
        solver=cfg.solver_config(),
    )


def _solve_sample(job):
    index, values = job
    mesh = _WORKER['mesh']
    try:
        field = DegradationField(values=values, grid=mesh.gauss_grid)
        result = solve_uniaxial(mesh, _WORKER['bc'], _WORKER['params'], _WORKER['dispersion'], field,
                                _WORKER['solver'])
    except FiberUQError as e:
        return index, None, {'index': index, 'error': str(e), 'type': error_type(e)}
    if not result.converged:
        return index, None, {
            'index': index,
            'error': f'Load stepping stopped at load factor {result.load_factor:.4f}',
            'type': 'non_convergence',
        }
    return index, result.values, None


def assign_splits(n_accepted, sizes):
    """Consecutive train/validation/test positions; test takes whatever remains."""
    train_size = min(sizes['train'], n_accepted)
    validation_size = min(sizes['validation'], n_accepted - train_size)
    bounds = [0, train_size, train_size + validation_size, n_accepted]
    return {name: list(range(bounds[k], bounds[k + 1])) for k, name in enumerate(SPLIT_NAMES)}


def _partial_path(path):
    return path.with_name(path.name + '.partial')


def _load_partial(path, cfg):
    partial = _partial_path(path)
    if not partial.exists():
        return {}, []
    header, arrays = read_container(partial)
    if header.get('config_hash') != cfg.config_hash():
        logger.warning(f'Ignoring {partial}: it was written for a different configuration')
        return {}, []
    done = {index: values for index, values in zip(header['solved'], arrays['stresses'])}
    logger.info(f'Resuming from {partial}: {len(done)} solved, {len(header["errors"])} failed')
    return done, header['errors']


def _write_partial(path, cfg, stresses, errors, shape):
    solved = sorted(stresses)
    values = np.stack([stresses[i] for i in solved]) if solved else np.empty((0, *shape))
    write_container(_partial_path(path), _header(cfg, 'partial', solved=solved, errors=errors), {'stresses': values})


def _run_jobs(cfg, jobs, n_jobs):
    if n_jobs <= 1:
        _init_worker(cfg.data)
        yield from map(_solve_sample, jobs)
        return
    with multiprocessing.Pool(n_jobs, initializer=_init_worker, initargs=(cfg.data,)) as pool:
        yield from pool.imap(_solve_sample, jobs)


def generate_dataset(cfg, fields, path, n_jobs=1):
    """Solve the extension test for every field and write the dataset container.

    Progress is checkpointed next to ``path`` every ``checkpoint_every``
    samples; a rerun with the same configuration resumes from there.
    """
    path = cfg.path('dataset') if path is None else Path(path)
    checkpoint_every = cfg['pipeline']['checkpoint_every']
    shape = cfg.mesh.gauss_grid.shape
    by_index = {index: field for index, field in fields}

    stresses, errors = _load_partial(path, cfg)
    finished = set(stresses) | {error['index'] for error in errors}
    pending = [(index, field.values) for index, field in fields if index not in finished]

    operation_log = new_operation_log(len(fields), checkpoint_every)
    started = time.perf_counter()
    since_checkpoint = 0
    for done, (index, values, error) in enumerate(_run_jobs(cfg, pending, n_jobs), start=1):
        if error is None:
            stresses[index] = values
        else:
            errors.append(error)
            logger.warning(f'Sample {index} skipped: {error["error"]}')
        since_checkpoint += 1
        if since_checkpoint == checkpoint_every:
            _write_partial(path, cfg, stresses, errors, shape)
            operation_log['batches_processed'] += 1
            since_checkpoint = 0
            logger.info(
                f'Solved {done}/{len(pending)} pending samples in {time.perf_counter() - started:.1f} s'
            )

    accepted = sorted(stresses)
    operation_log['successful'] = len(accepted)
    operation_log['failed'] = len(errors)
    operation_log['errors'] = sorted(errors, key=lambda e: e['index'])
    operation_log['accepted'] = accepted
    if since_checkpoint:
        operation_log['batches_processed'] += 1

    splits = assign_splits(len(accepted), cfg['splits'])
    inputs = np.stack([by_index[i].values for i in accepted]) if accepted else np.empty((0, *shape))
    targets = np.stack([stresses[i] for i in accepted]) if accepted else np.empty((0, *shape))
    train_targets = targets[splits['train']]
    normalization = Normalization.fit(train_targets) if train_targets.size else Normalization()
    header = _header(
        cfg, 'dataset',
        sample_indices=accepted,
        seeds=[list(by_index[i].seeds) for i in accepted],
        splits=splits,
        normalization=asdict(normalization),
        non_convergence=operation_log['errors'],
        grid=_grid_header(cfg.mesh.gauss_grid),
    )
    write_container(path, header, {'inputs': inputs, 'targets': targets})
    _partial_path(path).unlink(missing_ok=True)
    return operation_log


def load_dataset(path):
    header, arrays = read_container(path)
    _check_kind(header, 'dataset', path)
    return header, SurrogateDataset(arrays['inputs'], arrays['targets'], header['splits'])


def split_samples(header, dataset, name='test'):
    """Sample indices, fields and FE stresses of one dataset split."""
    inputs, targets = dataset.split(name)
    indices = [header['sample_indices'][position] for position in dataset.splits[name]]
    return indices, inputs, targets


# surrogate

def save_ensemble(path, cfg, ensemble, state):
    header = _header(
        cfg, 'ensemble',
        network=asdict(ensemble.network_config),
        posterior=asdict(ensemble.posterior),
        normalization=asdict(ensemble.normalization),
        epoch=state.epoch,
        adam_step=state.step,
        log=state.log,
    )
    arrays = {
        'particles': ensemble.particles.numpy(),
        'adam_exp_avg': state.exp_avg.numpy(),
        'adam_exp_avg_sq': state.exp_avg_sq.numpy(),
    }
    return write_container(path, header, arrays)


def load_ensemble(path):
    header, arrays = read_container(path)
    _check_kind(header, 'ensemble', path)
    ensemble = ParticleEnsemble(
        network_config=NetworkConfig(**header['network']),
        particles=torch.from_numpy(arrays['particles'].copy()),
        normalization=Normalization(**header['normalization']),
        posterior=PosteriorConfig(**header['posterior']),
    )
    state = TrainingState(
        particles=torch.from_numpy(arrays['particles'].copy()),
        exp_avg=torch.from_numpy(arrays['adam_exp_avg'].copy()),
        exp_avg_sq=torch.from_numpy(arrays['adam_exp_avg_sq'].copy()),
        step=header['adam_step'],
        epoch=header['epoch'],
        log=header['log'],
    )
    return header, ensemble, state


def write_training_log(path, log):
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(log, columns=['epoch', 'train_loss', 'validation_loss', 'learning_rate'])
    frame.to_csv(path, index=False)
    logger.info(f'Wrote {path}')
    return path


def train_surrogate(cfg, dataset_path, ensemble_path, log_path):
    """Train the particle ensemble, checkpointing after every epoch and resuming a matching checkpoint."""
    seed = cfg.require_seed()
    _, dataset = load_dataset(dataset_path)
    network_config, training_config = cfg.network_config(), cfg.training_config()

    resume = None
    if ensemble_path.exists():
        header, _, state = load_ensemble(ensemble_path)
        if header['config_hash'] == cfg.config_hash() and state.epoch < training_config.epochs:
            logger.info(f'Resuming training from epoch {state.epoch}')
            resume = state
        elif header['config_hash'] != cfg.config_hash():
            logger.warning(f'{ensemble_path} was trained with another configuration and will be replaced')

    def checkpoint(state):
        ensemble = ParticleEnsemble(network_config, state.particles, normalization, training_config.posterior)
        save_ensemble(ensemble_path, cfg, ensemble, state)

    normalization = Normalization.fit(dataset.split('train')[1])
    ensemble, state = train(dataset, network_config, training_config, seed, resume=resume, on_epoch=checkpoint)
    save_ensemble(ensemble_path, cfg, ensemble, state)
    write_training_log(log_path, state.log)

    operation_log = new_operation_log(training_config.epochs, training_config.batch_size)
    operation_log['successful'] = state.epoch
    operation_log['batches_processed'] = state.epoch - (resume.epoch if resume else 0)
    if 'test' in dataset.splits and dataset.splits['test'].size:
        metrics = evaluate(ensemble, *dataset.split('test'))
        logger.info(
            f'Held-out R² {metrics["r2"]:.3f}, mean relative error {metrics["mean_relative_error"]:.3f}'
        )
    return ensemble, operation_log


def predict(cfg, ensemble, inputs, indices, path, targets=None):
    prediction = predict_ensemble(ensemble, inputs)
    extra = {
        'sample_indices': list(indices),
        'n_particles': ensemble.size,
        'posterior': asdict(ensemble.posterior),
        'normalization': asdict(ensemble.normalization),
    }
    if targets is not None and len(indices):
        extra['metrics'] = evaluate(ensemble, inputs, targets)
    write_container(path, _header(cfg, 'predictions', **extra), {
        'mean': prediction.mean,
        'std': prediction.std,
        'particles': prediction.particles,
    })
    return prediction


def load_predictions(path):
    header, arrays = read_container(path)
    _check_kind(header, 'predictions', path)
    return header, arrays


# report

def _write_csv(frame, path):
    frame.to_csv(path, index=False)
    logger.info(f'Wrote {path}')
    return path


def _moment_rows(source, values):
    mean, std, var = moment_maps(values)
    u, v = np.meshgrid(np.arange(1, mean.shape[0] + 1), np.arange(1, mean.shape[1] + 1), indexing='ij')
    return pd.DataFrame({
        'source': source, 'u': u.ravel(), 'v': v.ravel(),
        'mean': mean.ravel(), 'std': std.ravel(), 'var': var.ravel(),
    })


def _local_exceedance(curve):
    n_thresholds, rows, cols = curve.local.shape
    u, v = np.meshgrid(np.arange(1, rows + 1), np.arange(1, cols + 1), indexing='ij')
    return pd.DataFrame({
        'u': np.tile(u.ravel(), n_thresholds),
        'v': np.tile(v.ravel(), n_thresholds),
        'threshold': np.repeat(curve.thresholds, rows * cols),
        'probability': curve.local.ravel(),
    })


def uq_report(cfg, fe_values, report_dir, surrogate=None, references=None):
    """Write the CSV bundle for the FE reference and, when given, the surrogate aggregate.

    ``references`` are FE stresses of the fields the surrogate predicted, in
    the same order; they are scored against credible intervals of the
    surrogate predictive for the reliability diagram.
    """
    report_dir.mkdir(parents=True, exist_ok=True)
    section = cfg['uq']
    sources = {Source.FE.value: fe_values}
    if surrogate is not None:
        sources[Source.SURROGATE.value] = surrogate.flat()
    if section['thresholds']:
        thresholds = np.asarray(section['thresholds'], dtype=np.float64)
    else:
        thresholds = default_thresholds(*sources.values(), count=section['threshold_count'])

    written = [_write_csv(pd.concat([_moment_rows(name, values) for name, values in sources.items()]),
                          report_dir / 'moments.csv')]

    for probe in section['probes']:
        u, v = probe
        for name, values in sources.items():
            posterior = aggregate_site_pdf(values, probe, bins=section['bins'])
            written.append(_write_csv(pd.DataFrame({
                'bin_left': posterior.edges[:-1],
                'bin_right': posterior.edges[1:],
                'count': posterior.counts,
                'density': posterior.density(),
            }), report_dir / f'histogram_{u}_{v}_{name}.csv'))
        i, j = site_index(probe, fe_values.shape[1:])
        overlay = pd.DataFrame({
            'threshold': thresholds,
            'fe': survival_curve(fe_values[:, i, j], thresholds).probabilities,
            'surrogate': (surrogate.site_survival(probe, thresholds).probabilities
                          if surrogate is not None else np.nan),
        })
        written.append(_write_csv(overlay, report_dir / f'survival_{u}_{v}.csv'))

    curves = {}
    for name, values in sources.items():
        curves[name] = ExceedanceCounter(thresholds, values.shape[1:]).update(values).curve()
        written.append(_write_csv(_local_exceedance(curves[name]), report_dir / f'exceedance_local_{name}.csv'))
    written.append(_write_csv(pd.DataFrame({
        'threshold': thresholds,
        'fe': curves[Source.FE.value].global_,
        'surrogate': curves[Source.SURROGATE.value].global_ if surrogate is not None else np.nan,
    }), report_dir / 'exceedance_global.csv'))

    aggregation = [{
        'source': Source.FE.value, 'n_samples': fe_values.shape[0], 'n_particles': 1,
        'sample_weight': 1.0 / fe_values.shape[0], 'particle_weight': 1.0,
    }]
    if surrogate is not None:
        aggregation.append(surrogate.metadata())
    written.append(_write_csv(pd.DataFrame(aggregation), report_dir / 'aggregation.csv'))

    summary = None
    if surrogate is not None and references is not None:
        shape = surrogate.predictions.shape
        if (shape[0], *shape[2:]) != references.shape:
            raise ShapeMismatch('Surrogate predictions do not pair with the FE references')
        levels = credibility_levels(section['levels'])
        diagram = reliability_diagram(references, intervals=surrogate.credible_intervals(levels), levels=levels)
        written.append(_write_csv(pd.DataFrame({
            'nominal': diagram.nominal,
            'empirical': diagram.empirical,
            'standard_error': diagram.standard_error,
        }), report_dir / 'reliability.csv'))
        summary = {'accuracy': diagram.accuracy, 'calibration_error': diagram.calibration_error}
        logger.info(
            f'Reliability: max coverage {diagram.accuracy:.3f}, '
            f'max calibration error {diagram.calibration_error:.3f}'
        )
    return written, summary


def surrogate_aggregate(cfg, header, particles):
    """Stored (particles, samples, h, w) predictions as an aggregate over (sample, particle) pairs."""
    return SurrogateAggregate.from_posterior(
        np.swapaxes(particles, 0, 1),
        PosteriorConfig(**header['posterior']),
        Normalization(**header['normalization']),
        smoothed=cfg['uq']['smoothed'],
    )
