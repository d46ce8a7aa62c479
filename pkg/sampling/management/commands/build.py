"""
Build a sampling structure over a dataset and pickle it for the query command.
Command: python manage.py build --input data.txt --sampler nnis --metric hamming --r 4 --c 4 --out index.fann
"""

# Django imports
from django.core.management.base import BaseCommand

# Local imports
from sampling.cli import add_sampler_arguments, command_errors, config_from_options
from sampling.dataset_io import DatasetFormat, load_dataset, save_structure
from sampling.reports import format_kv
from sampling.runners import estimate_memory
from sampling.trials import build_structure

# Standard library imports
import logging
import time

# Logger for this module
logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Build a fair near-neighbor structure and save it to a file'

    def add_arguments(self, parser):
        add_sampler_arguments(parser)
        parser.add_argument('--input', required=True, help='Dataset file')
        parser.add_argument('--format', choices=[kind.value for kind in DatasetFormat],
                            help='Dataset file format (sniffed when omitted)')
        parser.add_argument('--out', required=True, help='Where to write the structure')

    def handle(self, *args, **options):
        with command_errors():
            config = config_from_options(options)
            dataset = load_dataset(options['input'], options.get('format'))
            started = time.perf_counter()
            structure = build_structure(config, dataset)
            elapsed = time.perf_counter() - started
            save_structure(structure, options['out'], meta={
                'config': config,
                'dataset_digest': dataset.digest(),
            })
        logger.info(
            "Structure saved",
            extra={'event_type': 'structure_saved', 'sampler': config.sampler.value,
                   'path': options['out'], 'n': dataset.n}
        )
        self.stdout.write(format_kv([
            ('sampler', config.sampler.value),
            ('n', dataset.n),
            ('dim', dataset.dim),
            ('seed', config.seed),
            ('build_seconds', round(elapsed, 6)),
            ('memory_bytes', estimate_memory(structure)),
            ('out', options['out']),
        ]))
