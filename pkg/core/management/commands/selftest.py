import numpy as np

from constitutive.material import uniaxial_material_point
from randomfields.kernels import SpectralForm, spectral_mass
from randomfields.transforms import beta_field_from_seeds, field_seeds
from surrogate.network import parameter_count
from ...pipeline import new_operation_log
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = 'Quick consistency checks of the configured models'

    def check(self, operation_log, name, passed, detail):
        operation_log['total_processed'] += 1
        if passed:
            operation_log['successful'] += 1
            self.stdout.write(f'  ok    {name}: {detail}')
        else:
            operation_log['failed'] += 1
            operation_log['errors'].append({'index': operation_log['total_processed'], 'error': detail, 'type': name})
            self.stdout.write(self.style.ERROR(f'  FAIL  {name}: {detail}'))

    def run(self, cfg, **options):
        operation_log = new_operation_log(0, 1)
        spec = cfg.covariance_spec()

        for form in SpectralForm:
            mass = spectral_mass(spec, form)
            self.stdout.write(f'Spectral mass ({form.label}): {mass:.6f}, variance {spec.variance:.6f}')
        consistent = spectral_mass(spec, SpectralForm.CONSISTENT)
        self.check(operation_log, 'spectral_mass', abs(consistent - spec.variance) <= 1e-6 * spec.variance,
                   f'{consistent:.6f} against {spec.variance:.6f}')

        dispersion = cfg.dispersion
        sums = np.concatenate([dispersion.collagen_densities.sum(axis=1), [dispersion.elastic_densities.sum()]])
        self.check(operation_log, 'fiber_densities', np.allclose(sums, 1.0, atol=1e-10),
                   f'{len(dispersion.directions)} directions, density sums {np.round(sums, 12).tolist()}')

        params = cfg.beta_params()
        field = beta_field_from_seeds(params, spec, cfg.mesh.gauss_grid, field_seeds(params, cfg.seed or 0, 0),
                                      cfg.sampler_options())
        self.check(operation_log, 'beta_field', bool(np.all((field.values >= 0.0) & (field.values <= 1.0))),
                   f'range [{field.values.min():.4f}, {field.values.max():.4f}] on {field.values.shape}')

        material = cfg.material_params()
        stretch = 1.0 + cfg['mesh']['top_displacement'] / cfg['mesh']['length']
        intact = uniaxial_material_point(material, dispersion, 0.0, stretch)
        degraded = uniaxial_material_point(material, dispersion, 1.0, stretch)
        self.check(operation_log, 'degradation', degraded.sigma33 < intact.sigma33,
                   f'sigma33 {intact.sigma33:.4f} intact, {degraded.sigma33:.4f} fully degraded')

        network_config = cfg.network_config()
        self.stdout.write(f'Surrogate: {parameter_count(network_config)} weights per particle')
        operation_log['batches_processed'] = 1
        return operation_log, ''
