import copy

import pytest
import yaml

SMALL_RUN = {
    'seed': 7,
    'count': 6,
    'sampler': {'resolution': [32, 32]},
    'dispersion': {'directions': 160},
    'mesh': {'n_elements': 2},
    'network': {'blocks': [1, 1, 1], 'growth_rate': 2, 'initial_features': 8},
    'training': {'batch_size': 2, 'epochs': 2, 'n_particles': 2, 'restart_period': 2},
    'splits': {'train': 3, 'validation': 1, 'test': 2},
    'pipeline': {'batch_size': 4, 'checkpoint_every': 2},
    'uq': {'probes': [[1, 2]], 'threshold_count': 11, 'levels': 5},
}


@pytest.fixture
def small_run():
    return copy.deepcopy(SMALL_RUN)


@pytest.fixture
def data_dir(settings, tmp_path):
    settings.DATA_DIR = tmp_path / 'data'
    settings.DATA_DIR.mkdir()
    return settings.DATA_DIR


@pytest.fixture
def config_file(tmp_path, small_run):
    path = tmp_path / 'run.yaml'
    path.write_text(yaml.safe_dump(small_run), encoding='utf-8')
    return path
