import hashlib
import json

from django.db import models


class ExperimentRecord(models.Model):
    COMMAND_CHOICES = (
        ('calibrate', 'Calibrate'),
        ('run', 'Run'),
        ('sweep', 'Sweep'),
        ('verify', 'Verify'),
    )

    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    config_name = models.CharField(max_length=200, blank=True)
    config_digest = models.CharField(max_length=64, db_index=True)
    config = models.JSONField(default=dict)
    summary = models.JSONField(null=True, blank=True)
    exit_status = models.IntegerField(default=0)
    output_dir = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    @staticmethod
    def digest(config):
        """sha256 of the canonical (sorted-key) JSON form."""
        canonical = json.dumps(config, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def __str__(self):
        return f"{self.command} {self.config_name or self.config_digest[:12]} -> {self.exit_status}"
