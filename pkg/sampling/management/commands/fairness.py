"""
Run the fairness protocol of a sampler on a planted or given instance.
Command: python manage.py fairness --sampler nnis --metric hamming --r 4 --c 4 --near 10 --trials 20000
"""

# Django imports
from django.core.management.base import BaseCommand, CommandError

# Local imports
from sampling.cli import (
    add_instance_arguments, add_report_arguments, add_sampler_arguments, command_errors,
    config_from_options, instance_from_options,
)
from sampling.models import ExperimentRun
from sampling.reports import render, write_report
from sampling.runners import persist_run, run_fairness_test

# Standard library imports
import logging

# Logger for this module
logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Measure output uniformity and independence of a sampler'

    def add_arguments(self, parser):
        add_sampler_arguments(parser)
        add_instance_arguments(parser)
        add_report_arguments(parser)
        parser.add_argument('--trials', type=int, help='Number of samples to draw (default FANN_TRIALS)')
        parser.add_argument('--workers', type=int,
                            help='Processes for rebuilt samplers, threads otherwise (default FANN_WORKERS)')
        parser.add_argument('--strict', action='store_true', help='Exit non-zero when the run fails')

    def handle(self, *args, **options):
        with command_errors():
            config = config_from_options(options)
            instance = instance_from_options(options, config.metric)
            report = run_fairness_test(config, instance)
            if options['save']:
                persist_run(ExperimentRun.Kind.FAIRNESS, config, report, passed=report.passed)
            text = render(report.as_items(), 'Fairness report', options['report'])
            write_report(text, options.get('out'))
        self.stdout.write(text)
        if options['strict'] and not report.passed:
            raise CommandError(f"Fairness check failed: tvd={report.distribution.tvd:.4f}")
