import math
from collections.abc import Mapping

from rest_framework import serializers

from constitutive.hemisphere import QUADRATURE_LEVEL
from fesolver.assembly import Volumetric
from randomfields.kernels import Family, SpectralForm
from randomfields.samplers import SamplerMethod
from surrogate.training import Initialisation


class CovarianceSerializer(serializers.Serializer):
    variance = serializers.FloatField(default=0.173, min_value=1e-12)
    corr_length = serializers.FloatField(default=math.sqrt(2.0) / 3.0, min_value=1e-12)
    family = serializers.ChoiceField(choices=Family.choices, default=Family.SQUARED_EXPONENTIAL)


class BetaSerializer(serializers.Serializer):
    s = serializers.IntegerField(default=1, min_value=1)
    s_prime = serializers.IntegerField(default=1, min_value=1)


class SamplerSerializer(serializers.Serializer):
    method = serializers.ChoiceField(choices=SamplerMethod.choices, default=SamplerMethod.SPECTRAL)
    rel_tol = serializers.FloatField(default=1e-6, min_value=1e-15, max_value=0.5)
    resolution = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=2,
        max_length=2,
        default=lambda: [128, 128]
    )
    spectral_form = serializers.ChoiceField(choices=SpectralForm.choices, default=SpectralForm.CONSISTENT)
    pivot_offset = serializers.FloatField(default=0.5, min_value=0.0, max_value=1.0)
    embedding = serializers.FloatField(default=2.0, min_value=1.0)
    highres = serializers.IntegerField(default=256, min_value=2)


class MaterialSerializer(serializers.Serializer):
    mu_g = serializers.FloatField(default=10.0, min_value=1e-12)
    k1 = serializers.FloatField(default=20.0, min_value=0.0)
    k2 = serializers.FloatField(default=5.0, min_value=1e-12)
    mu_e = serializers.FloatField(default=30.0, min_value=0.0)
    gamma_e = serializers.FloatField(default=2.5, min_value=1e-12)
    collagen_angle = serializers.FloatField(default=40.0, min_value=0.0, max_value=90.0)
    bulk_modulus = serializers.FloatField(default=1.0e5, min_value=1e-12)
    collagen_concentration = serializers.FloatField(default=5.0, min_value=0.0)
    elastic_concentration = serializers.FloatField(default=2.0, min_value=0.0)


class DispersionSerializer(serializers.Serializer):
    directions = serializers.IntegerField(default=640, min_value=10)
    quadrature_level = serializers.IntegerField(default=QUADRATURE_LEVEL, min_value=0, max_value=5)


class MeshSerializer(serializers.Serializer):
    n_elements = serializers.IntegerField(default=10, min_value=1)
    n_thickness = serializers.IntegerField(default=1, min_value=1)
    length = serializers.FloatField(default=1.0, min_value=1e-12)
    top_displacement = serializers.FloatField(default=0.4)


class SolverSerializer(serializers.Serializer):
    load_steps = serializers.IntegerField(default=10, min_value=1)
    tol = serializers.FloatField(default=1e-8, min_value=1e-16)
    atol = serializers.FloatField(default=1e-10, min_value=1e-20)
    max_iterations = serializers.IntegerField(default=25, min_value=1)
    line_search = serializers.BooleanField(default=False)
    min_step = serializers.FloatField(default=1.0 / 64.0, min_value=1e-12, max_value=1.0)
    volumetric = serializers.ChoiceField(choices=Volumetric.choices, default=Volumetric.MEAN_DILATATION)
    augmentations = serializers.IntegerField(default=0, min_value=0)
    tangent_step = serializers.FloatField(default=1e-6, min_value=1e-12)


class NetworkSerializer(serializers.Serializer):
    blocks = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=3,
        default=lambda: [2, 3, 2]
    )
    growth_rate = serializers.IntegerField(default=2, min_value=1)
    initial_features = serializers.IntegerField(default=48, min_value=2)

    def validate_blocks(self, value):
        if len(value) % 2 == 0:
            raise serializers.ValidationError('Dense block layout needs an odd number of blocks')
        return value


class TrainingSerializer(serializers.Serializer):
    batch_size = serializers.IntegerField(default=64, min_value=1)
    epochs = serializers.IntegerField(default=200, min_value=1)
    learning_rate = serializers.FloatField(default=0.03, min_value=1e-12)
    eta_min = serializers.FloatField(default=0.0, min_value=0.0)
    restart_period = serializers.IntegerField(default=20, min_value=1)
    n_particles = serializers.IntegerField(default=20, min_value=2)
    init = serializers.ChoiceField(choices=Initialisation.choices, default=Initialisation.DEFAULT)
    a1 = serializers.FloatField(default=2.0, min_value=1e-12)
    b1 = serializers.FloatField(default=2e-6, min_value=1e-300)
    a0 = serializers.FloatField(default=1.0, min_value=1e-12)
    b0 = serializers.FloatField(default=0.05, min_value=1e-300)


class UQSerializer(serializers.Serializer):
    probes = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2),
        allow_empty=False,
        default=lambda: [[10, 20]]
    )
    thresholds = serializers.ListField(
        child=serializers.FloatField(),
        required=False,
        allow_null=True,
        default=None
    )
    threshold_count = serializers.IntegerField(default=101, min_value=2)
    bins = serializers.CharField(default='fd')
    levels = serializers.IntegerField(default=30, min_value=1)
    smoothed = serializers.BooleanField(default=True)

    def validate_thresholds(self, value):
        if value and any(b < a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError('Thresholds must be sorted ascending')
        return value


class SplitsSerializer(serializers.Serializer):
    train = serializers.IntegerField(default=420, min_value=1)
    validation = serializers.IntegerField(default=80, min_value=0)
    test = serializers.IntegerField(default=500, min_value=0)


class PathsSerializer(serializers.Serializer):
    fields = serializers.CharField(default='fields.fuq')
    dataset = serializers.CharField(default='dataset.fuq')
    ensemble = serializers.CharField(default='ensemble.fuq')
    predictions = serializers.CharField(default='predictions.fuq')
    training_log = serializers.CharField(default='training_log.csv')
    report = serializers.CharField(default='report')


class PipelineSerializer(serializers.Serializer):
    batch_size = serializers.IntegerField(default=100, min_value=1, max_value=10000)
    checkpoint_every = serializers.IntegerField(default=100, min_value=1)


class RunConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=0)
    count = serializers.IntegerField(default=1000, min_value=1)
    covariance = CovarianceSerializer(required=False)
    beta = BetaSerializer(required=False)
    sampler = SamplerSerializer(required=False)
    material = MaterialSerializer(required=False)
    dispersion = DispersionSerializer(required=False)
    mesh = MeshSerializer(required=False)
    solver = SolverSerializer(required=False)
    network = NetworkSerializer(required=False)
    training = TrainingSerializer(required=False)
    uq = UQSerializer(required=False)
    splits = SplitsSerializer(required=False)
    paths = PathsSerializer(required=False)
    pipeline = PipelineSerializer(required=False)

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            data = dict(data)
            for name, field in self.fields.items():
                if isinstance(field, serializers.Serializer) and data.get(name) is None:
                    data[name] = {}
        return super().to_internal_value(data)

    def validate(self, data):
        splits = data['splits']
        total = splits['train'] + splits['validation'] + splits['test']
        if total > data['count']:
            raise serializers.ValidationError({
                'splits': f'Split sizes add up to {total}, more than the {data["count"]} samples requested'
            })
        halvings = len(data['network']['blocks']) // 2
        if (2 * data['mesh']['n_elements']) % (2 ** halvings) != 0:
            raise serializers.ValidationError({
                'network': f'{len(data["network"]["blocks"])} dense blocks cannot halve a '
                           f'{2 * data["mesh"]["n_elements"]}-point Gauss grid'
            })
        return data


class OperationLogSerializer(serializers.Serializer):
    total_processed = serializers.IntegerField()

    successful = serializers.IntegerField()

    failed = serializers.IntegerField()

    accepted = serializers.ListField(
        child=serializers.IntegerField(),
        required=False,
        allow_empty=True
    )

    errors = serializers.ListField(
        child=serializers.DictField(),
        required=False,
        allow_empty=True
    )

    batches_processed = serializers.IntegerField(
        required=False,
        default=0
    )

    batch_size = serializers.IntegerField()
