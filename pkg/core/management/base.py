import logging
import time

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from audit.models import RunLog
from audit.records import record_run
from fiberuq.exceptions import FiberUQError, InvalidConfig
from ..config import load_config
from ..serializers import OperationLogSerializer

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """Shared flags, configuration loading and run recording of the pipeline commands.

    Subclasses implement ``run(cfg, **options)`` and return the operation log
    and the artifact they wrote.
    """

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            default=None,
            help='YAML run configuration; defaults apply when omitted'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Master seed, replaces the seed of the configuration file'
        )
        parser.add_argument(
            '--jobs',
            type=int,
            default=1,
            help='Worker processes for independent samples'
        )
        parser.add_argument(
            '--paper-preset',
            dest='full_scale',
            action='store_true',
            help='Overlay full-scale sample counts, splits, network and training'
        )

    def run(self, cfg, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        if options['jobs'] < 1:
            raise CommandError('--jobs must be at least 1')
        try:
            cfg = load_config(options['config'], seed=options['seed'], full_scale=options['full_scale'])
        except FiberUQError as e:
            raise CommandError(str(e))
        settings.DATA_DIR.mkdir(parents=True, exist_ok=True)

        started = time.perf_counter()
        try:
            operation_log, artifact = self.run(cfg, **options)
        except FiberUQError as e:
            record_run(
                self.name,
                {'errors': [{'error': str(e), 'type': type(e).__name__}]},
                status=RunLog.Status.FAILED,
                seed=cfg.seed,
                jobs=options['jobs'],
                config_hash=cfg.config_hash(),
                duration=time.perf_counter() - started,
            )
            if isinstance(e, InvalidConfig):
                raise CommandError(str(e))
            raise CommandError(f'{type(e).__name__}: {e}')

        serializer = OperationLogSerializer(data=operation_log)
        serializer.is_valid(raise_exception=True)
        record_run(
            self.name,
            serializer.validated_data,
            seed=cfg.seed,
            jobs=options['jobs'],
            config_hash=cfg.config_hash(),
            artifact=artifact,
            duration=time.perf_counter() - started,
        )

        summary = (
            f'{self.name}: {operation_log["successful"]} of {operation_log["total_processed"]} succeeded, '
            f'{operation_log["failed"]} failed -> {artifact}'
        )
        if operation_log['failed']:
            self.stdout.write(self.style.WARNING(summary))
        else:
            self.stdout.write(self.style.SUCCESS(summary))

    @property
    def name(self):
        return self.__module__.rsplit('.', 1)[-1]
