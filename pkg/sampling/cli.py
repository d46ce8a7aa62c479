"""Argument wiring shared by the management commands."""

# Django imports
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

# Third-party imports
import numpy as np

# Local imports
from .config import Config, SamplerKind, build_metric
from .core import Metric, make_rng
from .dataset_io import DatasetFormat, load_dataset
from .exceptions import FairAnnError
from .lsh import FamilyKind
from .oracle import NeighborhoodOracle, exact_ball
from .planted import PlantedInstance, PlantedSpec, generate_planted

# Standard library imports
from contextlib import contextmanager
from typing import Iterator
import logging

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
REPORT_STYLES = ["kv", "table", "both"]


def add_metric_arguments(parser) -> None:
    parser.add_argument('--metric', choices=['euclidean', 'hamming', 'inner_product'],
                        default='hamming', help='Distance or similarity measure')
    parser.add_argument('--r', type=float, help='Near radius r (euclidean, hamming)')
    parser.add_argument('--c', type=float, help='Approximation factor c > 1 (euclidean, hamming)')
    parser.add_argument('--alpha', type=float, help='Near similarity threshold (inner_product)')
    parser.add_argument('--beta', type=float, help='Far similarity threshold (inner_product)')


def add_sampler_arguments(parser) -> None:
    parser.add_argument('--sampler', choices=[kind.value for kind in SamplerKind],
                        default=SamplerKind.NNS.value, help='Sampling structure to use')
    parser.add_argument('--family', choices=[kind.value for kind in FamilyKind],
                        help='LSH family (defaults to the one matching the metric)')
    parser.add_argument('--eps', type=float, help='Filter eps used by the query threshold')
    parser.add_argument('--seed', type=int, help='Master seed (default FANN_SEED)')
    parser.add_argument('--const', action='append', default=[], metavar='NAME=VALUE',
                        help='Override a structure constant, e.g. C_L=4 (repeatable)')
    add_metric_arguments(parser)


def add_instance_arguments(parser) -> None:
    parser.add_argument('--input', help='Dataset file; a planted instance is generated when absent')
    parser.add_argument('--query', help='Query file (a dataset whose first row is the query)')
    parser.add_argument('--format', choices=[kind.value for kind in DatasetFormat],
                        help='Dataset file format (sniffed when omitted)')
    parser.add_argument('--n', type=int, default=1000, help='Planted instance size')
    parser.add_argument('--dim', type=int, default=64, help='Planted instance dimension')
    parser.add_argument('--near', type=int, default=5, help='Planted near points')
    parser.add_argument('--cnear', type=int, default=0, help='Planted c-near points')
    parser.add_argument('--near-similarity', type=float,
                        help='Exact similarity of planted near points (inner_product)')


def add_report_arguments(parser) -> None:
    parser.add_argument('--report', choices=REPORT_STYLES, default='kv',
                        help='Report style: key=value lines, a table, or both')
    parser.add_argument('--save', action='store_true', help='Store the run in the database')
    parser.add_argument('--out', help='Also write the rendered report to this file')


def metric_from_options(options: dict) -> Metric:
    return build_metric(options['metric'], r=options.get('r'), c=options.get('c'),
                        alpha=options.get('alpha'), beta=options.get('beta'))


def config_from_options(options: dict) -> Config:
    return Config.from_settings(
        options['sampler'],
        metric_from_options(options),
        const_pairs=options.get('const') or [],
        family=options.get('family'),
        eps_filter=options.get('eps'),
        seed=options.get('seed'),
        trials=options.get('trials'),
        queries=options.get('queries'),
        workers=options.get('workers'),
    )


def seed_from_options(options: dict) -> int:
    seed = options.get('seed')
    return settings.FAIR_ANN['SEED'] if seed is None else seed


def instance_from_options(options: dict, metric: Metric) -> PlantedInstance:
    """The planted instance named by the options, or one wrapped around --input/--query."""
    seed = seed_from_options(options)
    if not options.get('input'):
        spec = PlantedSpec(metric=metric, n=options['n'], dim=options['dim'], near=options['near'],
                           cnear=options['cnear'], near_similarity=options.get('near_similarity'))
        return generate_planted(spec, make_rng(seed), seed=seed)
    if not options.get('query'):
        raise ValidationError("--query is required together with --input.")
    dataset = load_dataset(options['input'], options.get('format'))
    query = query_rows(options['query'], dataset.dim)[0]
    near_ids = exact_ball(NeighborhoodOracle(dataset, metric), query)
    spec = PlantedSpec(metric=metric, n=max(dataset.n, 1), dim=dataset.dim, near=len(near_ids))
    return PlantedInstance(dataset, query, near_ids, np.empty(0, dtype=np.int64), seed, spec)


def query_rows(path: str, dim: int) -> np.ndarray:
    queries = load_dataset(path)
    if queries.n == 0:
        raise ValidationError(f"Query file {path} holds no rows.")
    if queries.dim != dim:
        raise ValidationError(f"Queries have dimension {queries.dim}, dataset has {dim}.")
    return queries.points


@contextmanager
def command_errors() -> Iterator[None]:
    """Turn library, validation and file errors into a one-line ``CommandError``."""
    try:
        yield
    except ValidationError as exc:
        raise CommandError(" ".join(exc.messages))
    except (FairAnnError, OSError) as exc:
        raise CommandError(str(exc))
