"""
Generate a planted instance and write it as a dataset file plus a query file.
Command: python manage.py gen --metric hamming --r 4 --c 4 --n 1000 --dim 64 --near 5 --out data.txt --query-out q.txt
"""

# Django imports
from django.core.management.base import BaseCommand

# Local imports
from sampling.cli import (
    add_instance_arguments, add_metric_arguments, command_errors, instance_from_options,
    metric_from_options,
)
from sampling.core import Dataset
from sampling.dataset_io import DatasetFormat, save_dataset
from sampling.reports import format_kv

# Standard library imports
import logging

# Logger for this module
logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Generate a planted near-neighbor instance'

    def add_arguments(self, parser):
        add_metric_arguments(parser)
        add_instance_arguments(parser)
        parser.add_argument('--seed', type=int, help='Generation seed (default FANN_SEED)')
        parser.add_argument('--out', required=True, help='Where to write the dataset')
        parser.add_argument('--query-out', required=True, help='Where to write the query point')

    def handle(self, *args, **options):
        with command_errors():
            options['input'] = None
            metric = metric_from_options(options)
            instance = instance_from_options(options, metric)
            kind = options.get('format') or DatasetFormat.TEXT.value
            save_dataset(instance.dataset, options['out'], kind)
            save_dataset(Dataset([instance.query]), options['query_out'], kind)
        self.stdout.write(format_kv([
            ('n', instance.dataset.n),
            ('dim', instance.dataset.dim),
            ('near', len(instance.near_ids)),
            ('cnear', len(instance.cnear_ids)),
            ('seed', instance.seed),
            ('near_ids', ",".join(str(i) for i in instance.near_ids)),
            ('dataset', options['out']),
            ('query', options['query_out']),
        ]))
