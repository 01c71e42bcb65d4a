import numpy as np

from ...pipeline import load_dataset, load_ensemble, load_fields, new_operation_log, predict, split_samples
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = 'Write predictive mean and std maps of the ensemble for the test split or a fields container'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--fields',
            default=None,
            help='Fields container to predict instead of the dataset test split'
        )

    def run(self, cfg, **options):
        _, ensemble, _ = load_ensemble(cfg.path('ensemble'))
        if options['fields']:
            _, fields = load_fields(options['fields'])
            indices = [index for index, _ in fields]
            inputs = np.stack([field.values for _, field in fields])
            targets = None
        else:
            header, dataset = load_dataset(cfg.path('dataset'))
            indices, inputs, targets = split_samples(header, dataset, 'test')

        target = cfg.path('predictions')
        predict(cfg, ensemble, inputs, indices, target, targets=targets)
        operation_log = new_operation_log(len(indices), len(indices))
        operation_log['successful'] = len(indices)
        operation_log['accepted'] = list(indices)
        operation_log['batches_processed'] = 1
        return operation_log, target
