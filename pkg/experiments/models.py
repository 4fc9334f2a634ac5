from django.db import models
from django.utils.translation import gettext_lazy as _


class ExperimentRun(models.Model):
    """One recorded invocation of a lab command (written only with --record)"""

    class Status(models.TextChoices):
        SUCCEEDED = 'succeeded', _('Succeeded')
        INVALID = 'invalid', _('Invalid input')
        FAILED = 'failed', _('Failed')

    subcommand = models.CharField(
        _('Subcommand'),
        max_length=32,
        db_index=True
    )
    arguments = models.JSONField(
        _('Resolved options'),
        default=dict
    )
    seed = models.BigIntegerField(
        _('Seed'),
        null=True,
        blank=True
    )
    summary = models.TextField(
        _('Summary line'),
        blank=True
    )
    outputs = models.JSONField(
        _('Output paths'),
        default=list
    )
    status = models.CharField(
        _('Status'),
        max_length=16,
        choices=Status.choices,
        default=Status.SUCCEEDED
    )
    duration_seconds = models.FloatField(
        _('Duration (s)'),
        default=0.0
    )
    created_at = models.DateTimeField(
        _('Created at'),
        auto_now_add=True
    )

    class Meta:
        verbose_name = _('Experiment run')
        verbose_name_plural = _('Experiment runs')
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.subcommand} [{self.status}] {self.created_at:%Y-%m-%d %H:%M:%S}"
