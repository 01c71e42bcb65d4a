import hashlib
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import yaml
from django.conf import settings

from constitutive.hemisphere import discretize_hemisphere
from constitutive.material import MaterialParams, build_fiber_dispersion
from fesolver.mesh import BoundaryConditions, build_unit_cube_mesh
from fesolver.solver import SolverConfig
from fiberuq.exceptions import InvalidConfig, IOFailure
from randomfields.kernels import CovarianceSpec
from randomfields.samplers import SamplerOptions
from randomfields.transforms import BetaFieldParams
from surrogate.network import NetworkConfig
from surrogate.svgd import PosteriorConfig
from surrogate.training import TrainingConfig
from .serializers import RunConfigSerializer

logger = logging.getLogger(__name__)

FULL_SCALE_PRESET = {
    'count': 10000,
    'splits': {'train': 4200, 'validation': 800, 'test': 5000},
    'network': {'blocks': [2, 5, 2], 'growth_rate': 2, 'initial_features': 120},
    'training': {'batch_size': 350, 'epochs': 500, 'learning_rate': 0.03, 'n_particles': 20},
    'sampler': {'highres': 2048},
}


def _merge(base, overlay):
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_yaml(path):
    try:
        with open(path, encoding='utf-8') as stream:
            data = yaml.safe_load(stream)
    except FileNotFoundError:
        raise IOFailure(f'Configuration file {path} does not exist')
    except yaml.YAMLError as e:
        raise InvalidConfig({'non_field_errors': [f'{path} is not valid YAML: {e}']})
    return data or {}


def load_config(path=None, seed=None, full_scale=False, data=None):
    """Validated run configuration from a YAML file, with preset and command-line overrides."""
    raw = dict(data or {}) if path is None else read_yaml(path)
    if not isinstance(raw, dict):
        raise InvalidConfig({'non_field_errors': ['The run configuration must be a mapping']})
    if full_scale:
        raw = _merge(raw, FULL_SCALE_PRESET)
    if seed is not None:
        raw['seed'] = seed

    serializer = RunConfigSerializer(data=raw)
    if not serializer.is_valid():
        raise InvalidConfig(serializer.errors)
    return RunConfig(serializer.validated_data)


@dataclass(frozen=True, eq=False)
class RunConfig:
    data: dict

    def __getitem__(self, section):
        return self.data[section]

    @property
    def seed(self):
        return self.data['seed']

    def require_seed(self):
        if self.seed is None:
            raise InvalidConfig({'seed': ['A master seed is required for this command']})
        return self.seed

    def snapshot(self):
        """Canonical JSON of the validated configuration."""
        return json.dumps(self.data, sort_keys=True, separators=(',', ':'), default=list)

    def config_hash(self):
        return hashlib.sha256(self.snapshot().encode('utf-8')).hexdigest()

    def path(self, name):
        path = Path(self.data['paths'][name])
        return path if path.is_absolute() else Path(settings.DATA_DIR) / path

    def covariance_spec(self):
        return CovarianceSpec(**self.data['covariance'])

    def beta_params(self):
        return BetaFieldParams(**self.data['beta'])

    def sampler_options(self):
        options = dict(self.data['sampler'])
        options['resolution'] = tuple(options['resolution'])
        return SamplerOptions(**options)

    def material_params(self):
        return MaterialParams(**self.data['material'])

    @cached_property
    def dispersion(self):
        section = self.data['dispersion']
        mesh = discretize_hemisphere(section['directions'])
        return build_fiber_dispersion(mesh, self.material_params(), section['quadrature_level'])

    @cached_property
    def mesh(self):
        section = self.data['mesh']
        return build_unit_cube_mesh(section['n_elements'], section['n_thickness'], section['length'])

    def boundary_conditions(self):
        return BoundaryConditions(top_displacement=self.data['mesh']['top_displacement'])

    def solver_config(self):
        return SolverConfig(**self.data['solver'])

    def network_config(self):
        section = self.data['network']
        return NetworkConfig(
            blocks=tuple(section['blocks']),
            growth_rate=section['growth_rate'],
            initial_features=section['initial_features'],
            size=2 * self.data['mesh']['n_elements'],
        )

    def posterior_config(self):
        section = self.data['training']
        return PosteriorConfig(a1=section['a1'], b1=section['b1'], a0=section['a0'], b0=section['b0'])

    def training_config(self):
        section = {k: v for k, v in self.data['training'].items() if k not in ('a1', 'b1', 'a0', 'b0')}
        return TrainingConfig(posterior=self.posterior_config(), **section)
