"""
Run ledger: one row per command invocation, its output files and the
coefficients it reported. Output files on disk remain the source of truth.
"""

from django.db import models


class ExperimentRun(models.Model):
    """
    One invocation of a pipeline command.
    """
    STATUS_CHOICES = [
        ('success', 'Success'),
        ('partial', 'Partial'),
        ('failed', 'Failed'),
    ]

    command = models.CharField(max_length=32)
    config_digest = models.CharField(max_length=64)
    master_seed = models.BigIntegerField()
    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='success')
    message = models.TextField(blank=True)
    started_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-started_at']
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'

    def __str__(self):
        return f"{self.command} ({self.status}) {self.config_digest[:12]}"


class RunArtifact(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='artifacts')
    path = models.CharField(max_length=500)
    sha256 = models.CharField(max_length=64)

    class Meta:
        ordering = ['path']

    def __str__(self):
        return self.path


class CoefficientRecord(models.Model):
    """
    A reliability coefficient reported by a run, for one K and optionally
    one replication subset.
    """
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='coefficients')
    k = models.PositiveIntegerField()
    subset = models.CharField(max_length=200, blank=True)
    metric = models.CharField(max_length=32)
    value = models.FloatField(null=True)
    standard_error = models.FloatField(null=True)
    label = models.CharField(max_length=20)

    class Meta:
        ordering = ['k', 'subset', 'metric']

    def __str__(self):
        return f"K={self.k} {self.metric}={self.value}"
