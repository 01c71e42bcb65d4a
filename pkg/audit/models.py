from django.core.serializers.json import DjangoJSONEncoder
from django.db import models
from django.utils import timezone


class CreatedAtField(models.DateTimeField):
    """Creation time filled in by Django and, for rows written outside the ORM, by the database."""

    database_defaults = {
        'postgresql': 'timestamp with time zone NOT NULL DEFAULT CURRENT_TIMESTAMP',
        'sqlite': 'datetime NOT NULL DEFAULT CURRENT_TIMESTAMP',
    }

    def __init__(self, *args, **kwargs):
        kwargs.update(default=timezone.now, editable=False, db_index=True)
        super().__init__(*args, **kwargs)

    def db_type(self, connection):
        return self.database_defaults.get(connection.vendor) or super().db_type(connection)

    def deconstruct(self):
        name, path, args, kwargs = super().deconstruct()
        for key in ('default', 'editable', 'db_index'):
            kwargs.pop(key, None)
        return name, path, args, kwargs


class RunLog(models.Model):
    class Status(models.TextChoices):
        COMPLETED = 'completed', 'Completed'
        COMPLETED_WITH_FAILURES = 'completed_with_failures', 'Completed with failed samples'
        FAILED = 'failed', 'Failed'

    class Meta:
        db_table = 'run_logs'
        ordering = ['-created_at']

    id = models.BigAutoField(
        primary_key=True
    )

    command = models.CharField(
        max_length=50
    )

    status = models.CharField(
        max_length=30,
        choices=Status.choices
    )

    total_processed = models.PositiveIntegerField(
        default=0
    )

    successful = models.PositiveIntegerField(
        default=0
    )

    failed = models.PositiveIntegerField(
        default=0
    )

    errors = models.JSONField(
        default=list,
        encoder=DjangoJSONEncoder
    )

    non_converged = models.JSONField(
        default=list,
        blank=True
    )

    seed = models.BigIntegerField(
        null=True,
        blank=True
    )

    jobs = models.PositiveIntegerField(
        default=1
    )

    config_hash = models.CharField(
        max_length=64,
        blank=True
    )

    artifact = models.CharField(
        max_length=500,
        blank=True
    )

    duration = models.FloatField(
        default=0.0
    )

    created_at = CreatedAtField()

    def __str__(self):
        return f'{self.command} ({self.status}) at {self.created_at:%Y-%m-%d %H:%M}'
