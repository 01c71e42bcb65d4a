from ...pipeline import sample_fields, save_fields
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = 'Draw the beta degradation fields of a run and store them in the fields container'

    def run(self, cfg, **options):
        fields, operation_log = sample_fields(cfg)
        return operation_log, save_fields(cfg.path('fields'), cfg, fields)
