from ...pipeline import train_surrogate
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = 'Train the particle ensemble of surrogates on the dataset, resuming a matching checkpoint'

    def run(self, cfg, **options):
        target = cfg.path('ensemble')
        _, operation_log = train_surrogate(cfg, cfg.path('dataset'), target, cfg.path('training_log'))
        return operation_log, target
