"""
Answer queries against a structure written by the build command.
Command: python manage.py query --structure index.fann --query q.txt [--repeat 10]
"""

# Django imports
from django.core.management.base import BaseCommand

# Local imports
from sampling.cli import command_errors, query_rows, seed_from_options
from sampling.core import QueryCounters, make_rng
from sampling.dataset_io import load_structure
from sampling.trials import sample, trial_seed

# Standard library imports
import logging

# Logger for this module
logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Sample near neighbors of each query row from a saved structure'

    def add_arguments(self, parser):
        parser.add_argument('--structure', required=True, help='File written by the build command')
        parser.add_argument('--query', required=True, help='Query file, one query per row')
        parser.add_argument('--repeat', type=int, default=1, help='Times to ask each query')
        parser.add_argument('--seed', type=int, help='Query seed (default FANN_SEED)')

    def handle(self, *args, **options):
        with command_errors():
            structure, meta = load_structure(options['structure'])
            config = meta['config']
            queries = query_rows(options['query'], structure.dataset.dim)
            seed = seed_from_options(options)
            lines = []
            draw = 0
            for row, q in enumerate(queries):
                for repeat in range(max(options['repeat'], 0)):
                    counters = QueryCounters()
                    result = sample(config, structure, q, make_rng(trial_seed(seed, draw)), counters)
                    draw += 1
                    outcome = 'none' if result.outcome is None else result.outcome
                    lines.append(
                        f"query={row} repeat={repeat} outcome={outcome} "
                        f"inspected={counters.inspected} buckets={counters.buckets} rounds={result.rounds}"
                    )
        self.stdout.write("\n".join(lines))
