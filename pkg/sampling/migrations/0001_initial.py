# Generated by Django 5.2.7 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('fairness', 'Fairness'), ('bench', 'Benchmark')], max_length=16)),
                ('sampler', models.CharField(max_length=32)),
                ('seed', models.BigIntegerField(default=0)),
                ('trials', models.PositiveIntegerField(default=0)),
                ('passed', models.BooleanField(blank=True, null=True)),
                ('report', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Experiment run',
                'verbose_name_plural': 'Experiment runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['kind'], name='sampling_run_kind_idx'), models.Index(fields=['sampler'], name='sampling_run_sampler_idx')],
            },
        ),
    ]
