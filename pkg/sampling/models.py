# Django imports
from django.db import models


class ExperimentRun(models.Model):
    class Kind(models.TextChoices):
        FAIRNESS = "fairness", "Fairness"
        BENCH = "bench", "Benchmark"

    kind = models.CharField(max_length=16, choices=Kind.choices)
    sampler = models.CharField(max_length=32)
    seed = models.BigIntegerField(default=0)
    trials = models.PositiveIntegerField(default=0)
    passed = models.BooleanField(null=True, blank=True)
    report = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        outcome = {True: "passed", False: "failed", None: "n/a"}[self.passed]
        return f"{self.kind} {self.sampler} seed={self.seed} ({outcome})"

    class Meta:
        verbose_name = "Experiment run"
        verbose_name_plural = "Experiment runs"
        ordering = ["-created_at"]
        indexes = [
            models.Index(fields=["kind"], name="sampling_run_kind_idx"),
            models.Index(fields=["sampler"], name="sampling_run_sampler_idx"),
        ]
