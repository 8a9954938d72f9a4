"""
Registry of experiment runs launched from the management commands.
"""
import logging

from django.db import models
from django.utils import timezone
from django.utils.translation import gettext_lazy as _

logger = logging.getLogger(__name__)


class ExperimentRun(models.Model):
    """
    One execution of gen_data, train, eval, sweep or report.

    The summary holds the command's headline numbers (final losses, MSE, AUC).
    """

    KIND_CHOICES = [
        ('gen_data', _('Dataset generation')),
        ('train', _('Training')),
        ('eval', _('Evaluation')),
        ('sweep', _('Parameter sweep')),
        ('report', _('Report')),
    ]

    STATUS_CHOICES = [
        ('completed', _('Completed')),
        ('failed', _('Failed')),
        ('diverged', _('Diverged')),
    ]

    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='completed')
    config_hash = models.CharField(max_length=64, blank=True, help_text=_('Hash of the validated configuration'))
    seed = models.CharField(max_length=20, blank=True, help_text=_('Scenario seed (unsigned 64-bit)'))
    output_path = models.CharField(max_length=500, blank=True)
    summary = models.JSONField(default=dict, blank=True)
    message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        verbose_name = _('Experiment run')
        verbose_name_plural = _('Experiment runs')
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['kind', 'status'], name='vqccs_run_kind_status_idx'),
            models.Index(fields=['config_hash'], name='vqccs_run_config_hash_idx'),
        ]

    def __str__(self):
        return f"{self.get_kind_display()} {self.config_hash} ({self.get_status_display()})"


def record_run(kind, config=None, status='completed', output_path='', summary=None, message=''):
    """
    Store one run. Fails safe: a missing table or database error is logged
    and never interrupts the experiment.
    """
    try:
        return ExperimentRun.objects.create(
            kind=kind,
            status=status,
            config_hash=config.config_hash() if config is not None else '',
            seed=str(config.scenario.seed) if config is not None else '',
            output_path=str(output_path),
            summary=summary or {},
            message=message,
            finished_at=timezone.now(),
        )
    except Exception as exc:
        logger.warning('Could not record %s run in the registry: %s', kind, exc)
        return None


def recent_runs(limit=10):
    """Most recent runs, or an empty list when the registry is unavailable."""
    try:
        return list(ExperimentRun.objects.all()[:limit])
    except Exception as exc:
        logger.warning('Run registry unavailable: %s', exc)
        return []
