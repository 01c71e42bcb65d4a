import logging

from ...pipeline import generate_dataset, load_fields, sample_fields, save_fields
from ..base import PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = 'Solve the uniaxial extension test for every field and write the training dataset'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--fields',
            default=None,
            help='Fields container to solve; the configured one is used, or sampled when it does not exist'
        )

    def run(self, cfg, **options):
        path = options['fields'] or cfg.path('fields')
        if options['fields'] is None and not path.exists():
            logger.info(f'No fields at {path}, sampling them first')
            fields, _ = sample_fields(cfg)
            save_fields(path, cfg, fields)
        else:
            _, fields = load_fields(path)

        target = cfg.path('dataset')
        operation_log = generate_dataset(cfg, fields, target, n_jobs=options['jobs'])
        return operation_log, target
