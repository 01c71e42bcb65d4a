import logging

from ...pipeline import (load_dataset, load_predictions, new_operation_log, split_samples, surrogate_aggregate,
                         uq_report)
from ..base import PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = 'Aggregate FE and surrogate stresses into moment maps, histograms, survival and reliability curves'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--fe-only',
            action='store_true',
            help='Report the FE reference only, even when predictions exist'
        )

    def run(self, cfg, **options):
        header, dataset = load_dataset(cfg.path('dataset'))
        indices, _, fe_values = split_samples(header, dataset, 'test')

        surrogate = references = None
        predictions_path = cfg.path('predictions')
        if not options['fe_only'] and predictions_path.exists():
            prediction_header, arrays = load_predictions(predictions_path)
            surrogate = surrogate_aggregate(cfg, prediction_header, arrays['particles'])
            if prediction_header['sample_indices'] == list(indices):
                references = fe_values
            else:
                logger.warning('Predictions do not cover the test split; reliability diagram skipped')

        report_dir = cfg.path('report')
        written, _ = uq_report(cfg, fe_values, report_dir, surrogate=surrogate, references=references)
        operation_log = new_operation_log(len(written), len(written))
        operation_log['successful'] = len(written)
        operation_log['batches_processed'] = 1
        return operation_log, report_dir
