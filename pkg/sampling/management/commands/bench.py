"""
Benchmark build and query cost of a sampler with deterministic work counters.
Command: python manage.py bench --sampler nns --metric hamming --r 4 --c 4 --near 5 --cnear 20 --queries 200
"""

# Django imports
from django.core.management.base import BaseCommand

# Local imports
from sampling.cli import (
    add_instance_arguments, add_report_arguments, add_sampler_arguments, command_errors,
    config_from_options, instance_from_options,
)
from sampling.models import ExperimentRun
from sampling.reports import render, write_report
from sampling.runners import persist_run, run_bench

# Standard library imports
import logging

# Logger for this module
logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Time builds and queries and count the work they do'

    def add_arguments(self, parser):
        add_sampler_arguments(parser)
        add_instance_arguments(parser)
        add_report_arguments(parser)
        parser.add_argument('--queries', type=int, help='Number of queries to time (default FANN_QUERIES)')

    def handle(self, *args, **options):
        with command_errors():
            config = config_from_options(options)
            instance = instance_from_options(options, config.metric)
            report = run_bench(config, instance)
            if options['save']:
                persist_run(ExperimentRun.Kind.BENCH, config, report)
            text = render(report.as_items(), 'Benchmark report', options['report'])
            write_report(text, options.get('out'))
        self.stdout.write(text)
