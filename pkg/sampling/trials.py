"""
Per-trial building and sampling, importable without the ORM so that
process pools can run rebuild-per-trial fairness runs.
"""

# Third-party imports
import numpy as np

# Local imports
from .config import Config, SamplerKind
from .core import Dataset, QueryCounters, SampleResult, make_rng
from .fair_sampler import (
    SamplerMode, build_nns_sampler, naive_fair_query, nns_query, nns_query_rank_swap,
)
from .filter_index import (
    FilterParams, build_nnis_filter_index, filter_build, filter_nnis_query, filter_query,
    filter_repetitions,
)
from .lsh import compute_params, family_for
from .nnis import build_segment_sampler, nnis_query
from .oracle import NeighborhoodOracle, exact_uniform_sample

# Standard library imports
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Tuple
import logging

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
CHUNKS_PER_WORKER = 8

# Rebuild job held by each pool process
_rebuild_job: Optional[Tuple[Config, Dataset, np.ndarray]] = None


def trial_seed(seed: int, index: int) -> int:
    """Seed of trial ``index``, independent of how trials are scheduled."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def build_structure(config: Config, dataset: Dataset, seed: Optional[int] = None) -> Any:
    """Build the structure named by ``config.sampler``.

    Args:
        config (Config): Sampler kind, metric and structure constants.
        dataset (Dataset): The points to index.
        seed (int, optional): Build seed; ``config.seed`` when omitted.

    Returns:
        Any: An ``NnsSampler``, ``SegmentSampler``, ``FilterIndex``,
        ``NnisFilterIndex`` or ``NeighborhoodOracle``.
    """
    seed = config.seed if seed is None else seed
    constants = config.constants
    metric = config.metric
    kind = config.sampler
    if kind is SamplerKind.ORACLE:
        return NeighborhoodOracle(dataset, metric)
    if kind is SamplerKind.FILTER:
        repetitions = constants.repetitions or filter_repetitions(
            1.0 - constants.eps_filter, constants.filter_delta, metric.alpha
        )
        params = FilterParams(metric.alpha, metric.beta, constants.eps_filter, repetitions)
        return filter_build(dataset, params, make_rng(seed))
    if kind is SamplerKind.FILTER_NNIS:
        return build_nnis_filter_index(
            dataset, metric.alpha, metric.beta, constants.eps_filter, constants.c_f, seed
        )
    family = family_for(metric, dataset.dim, config.family, constants.width)
    params = compute_params(family, metric, dataset.n, constants.c_l, seed)
    if kind is SamplerKind.NNIS:
        return build_segment_sampler(
            dataset, metric, seed=seed, c_lambda=constants.c_lambda, c_sigma=constants.c_sigma,
            c_delta=constants.c_delta, c_t=constants.c_t, delta=constants.delta,
            sketch_eps=constants.eps,
            family=family, params=params,
        )
    mode = SamplerMode.RANK_SWAP if kind is SamplerKind.NNS_RANK_SWAP else SamplerMode.STATIC
    return build_nns_sampler(dataset, metric, mode=mode, seed=seed, family=family, params=params)


def sample(config: Config, structure: Any, q: np.ndarray, rng: np.random.Generator,
           counters: Optional[QueryCounters] = None) -> SampleResult:
    """Answer one query with the configured sampler."""
    kind = config.sampler
    if kind is SamplerKind.NNS:
        return nns_query(structure, q, counters)
    if kind is SamplerKind.NNS_RANK_SWAP:
        return nns_query_rank_swap(structure, q, counters)
    if kind is SamplerKind.NNS_NAIVE:
        return naive_fair_query(structure.index, q, config.metric, rng, counters)
    if kind is SamplerKind.NNIS:
        return nnis_query(structure, q, rng, counters)
    if kind is SamplerKind.FILTER:
        return SampleResult(filter_query(structure, q, counters))
    if kind is SamplerKind.FILTER_NNIS:
        return filter_nnis_query(structure, q, rng, counters)
    return SampleResult(exact_uniform_sample(structure, q, rng))


def rebuild_trial(config: Config, dataset: Dataset, q: np.ndarray, index: int) -> SampleResult:
    """Build a fresh structure from the seed of trial ``index`` and query it once."""
    seed = trial_seed(config.seed, index)
    structure = build_structure(config, dataset, seed)
    return sample(config, structure, q, make_rng(seed))


def _init_rebuild_worker(config: Config, dataset: Dataset, q: np.ndarray) -> None:
    global _rebuild_job
    _rebuild_job = (config, dataset, q)


def _run_rebuild_trial(index: int) -> SampleResult:
    return rebuild_trial(*_rebuild_job, index)


def map_rebuild_trials(config: Config, dataset: Dataset, q: np.ndarray, trials: int,
                       workers: int) -> List[SampleResult]:
    """Run ``trials`` rebuild trials, in ``workers`` processes when more than one.

    The dataset and query are shipped once per process. Results come back
    in trial order.

    Args:
        config (Config): The run configuration.
        dataset (Dataset): The indexed points.
        q (np.ndarray): The query vector.
        trials (int): Number of trials.
        workers (int): Number of processes.

    Returns:
        List[SampleResult]: One result per trial, trial ``i`` at position ``i``.
    """
    if workers <= 1 or trials <= 1:
        return [rebuild_trial(config, dataset, q, i) for i in range(trials)]
    chunksize = max(1, trials // (workers * CHUNKS_PER_WORKER))
    logger.debug(
        "Rebuild trials dispatched to processes",
        extra={'event_type': 'trial_pool', 'trials': trials, 'workers': workers, 'chunksize': chunksize}
    )
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_rebuild_worker,
                             initargs=(config, dataset, q)) as pool:
        return list(pool.map(_run_rebuild_trial, range(trials), chunksize=chunksize))


def map_trials(worker: Callable[[int], SampleResult], trials: int, workers: int) -> List[SampleResult]:
    """Run ``worker`` over trial indices in a thread pool sharing one structure."""
    if workers <= 1 or trials <= 1:
        return [worker(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(trials)))
