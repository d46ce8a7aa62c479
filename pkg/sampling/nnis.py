# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np

# Local imports
from .core import (
    Dataset, Metric, QueryCounters, QueryLike, RankPermutation, SampleResult,
    as_vector, make_rank_permutation, next_power_of_two, spawn_rngs,
)
from .exceptions import SegmentOutOfRangeError
from .lsh import (
    EMPTY_BUCKET, BucketTable, LshFamily, LshIndex, LshParams, build_index, compute_params,
    family_for,
)
from .sketch import (
    DistinctSketch, SketchFamily, merge_all, sketch_estimate, sketch_from_ids,
)

# Standard library imports
from typing import Dict, List, Optional, Sequence, Tuple
import hashlib
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
SKETCH_EPS = 0.5


class SegmentSampler:
    """LSH index with distinct-count sketches for its larger buckets.

    Rank arrays come from the index tables, which keep ``ranks`` parallel to
    ``ids``. Sketches exist only for buckets of at least
    ``sketch_threshold`` points; smaller ones are sketched on demand.
    Nothing here changes after the build, so queries may run concurrently
    as long as each owns its generator.
    """

    def __init__(self, index: LshIndex, perm: RankPermutation, metric: Metric,
                 sketch_family: SketchFamily, sketches: List[Dict[int, DistinctSketch]],
                 lam: int, sigma: int, sketch_threshold: int):
        self.index = index
        self.perm = perm
        self.metric = metric
        self.sketch_family = sketch_family
        self.sketches = sketches
        self.lam = lam
        self.sigma = sigma
        self.sketch_threshold = sketch_threshold
        self.padded_n = next_power_of_two(max(index.dataset.n, 1))

    @property
    def dataset(self) -> Dataset:
        return self.index.dataset

    def digest(self) -> str:
        sha = hashlib.sha256(self.perm.rank.tobytes())
        sha.update(self.index.digest().encode())
        for table in self.sketches:
            for key in sorted(table):
                sha.update(table[key].values.tobytes())
        return sha.hexdigest()


def nnis_constants(n: int, c_lambda: float, c_sigma: float) -> tuple:
    """(lambda, Sigma) = (ceil(C_lambda ln n), ceil(C_sigma ln^2 n)), both at least 1."""
    if c_lambda <= 0 or c_sigma <= 0:
        raise ValidationError("C_LAMBDA and C_SIGMA must be positive.")
    log_n = math.log(max(n, 1))
    return max(1, math.ceil(c_lambda * log_n)), max(1, math.ceil(c_sigma * log_n * log_n))


def build_segment_sampler(dataset: Dataset, metric: Metric, seed: int = 0, c_l: float = 3.0,
                          c_lambda: float = 4.0, c_sigma: float = 4.0, c_delta: float = 8.0,
                          c_t: float = 4.0, delta: Optional[float] = None,
                          sketch_eps: float = SKETCH_EPS,
                          family: Optional[LshFamily] = None,
                          params: Optional[LshParams] = None) -> SegmentSampler:
    """Build the independent-sampling structure.

    Bucket sketches use ``sketch_eps`` (default 1/2) and ``delta`` (default 1/n^3).
    """
    if dataset.n < 1:
        raise ValidationError("The sampler needs a non-empty dataset.")
    n = dataset.n
    perm_rng, hash_rng, sketch_rng = spawn_rngs(seed, 3)
    family = family if family is not None else family_for(metric, dataset.dim)
    params = params if params is not None else compute_params(family, metric, n, c_l, seed)
    perm = make_rank_permutation(n, perm_rng)
    index = build_index(dataset, family, params, perm, rng=hash_rng)

    delta = delta if delta is not None else 1.0 / max(n, 2) ** 3
    sketch_family = SketchFamily.create(n, sketch_eps, delta, c_delta, c_t, sketch_rng)
    threshold = max(1, math.ceil(math.log(n))) if n > 1 else 1
    sketches = [_sketch_large_buckets(sketch_family, table, threshold) for table in index.tables]
    lam, sigma = nnis_constants(n, c_lambda, c_sigma)
    logger.info(
        "Bucket sketches built",
        extra={
            'event_type': 'sketch_build',
            'n': n,
            'sketches': sum(len(table) for table in sketches),
            'lists': sketch_family.lists,
            't': sketch_family.t,
            'threshold': threshold,
        }
    )
    return SegmentSampler(index, perm, metric, sketch_family, sketches, lam, sigma, threshold)


def _sketch_large_buckets(family: SketchFamily, table: BucketTable,
                          threshold: int) -> Dict[int, DistinctSketch]:
    sketches = {}
    for j in np.flatnonzero(table.sizes >= threshold):
        ids = table.ids[table.starts[j]:table.starts[j + 1]]
        sketches[int(table.keys[j])] = sketch_from_ids(family, ids)
    return sketches


def _estimate(sampler: SegmentSampler, keys: Sequence[int], counters: QueryCounters) -> int:
    parts = []
    for table, key in enumerate(keys):
        bucket = sampler.index.tables[table]
        start, stop = bucket.span(key)
        if start == stop:
            continue
        ids = bucket.ids[start:stop]
        sketch = sampler.sketches[table].get(key)
        parts.append(sketch if sketch is not None else sketch_from_ids(sampler.sketch_family, ids))
    counters.sketch_merges += len(parts)
    return sketch_estimate(merge_all(parts, sampler.sketch_family))


def estimate_collisions(sampler: SegmentSampler, q: QueryLike,
                        counters: Optional[QueryCounters] = None) -> int:
    """Sketch estimate of the number of distinct ids colliding with ``q``.

    Args:
        sampler (SegmentSampler): The structure to query.
        q (QueryLike): The query point.
        counters (QueryCounters, optional): Receives buckets and sketch merges.

    Returns:
        int: The estimate; exact while the merged sketch is under-full.
    """
    vector = as_vector(q, sampler.dataset.dim)
    local = QueryCounters()
    keys = sampler.index.query_keys(vector)
    local.buckets += len(keys)
    estimate = _estimate(sampler, keys, local)
    if counters is not None:
        counters.add(local)
    return estimate


def _check_segment(sampler: SegmentSampler, k: int, h: int) -> None:
    if k < 1 or k > sampler.padded_n or k & (k - 1):
        raise SegmentOutOfRangeError(
            f"Segment count {k} must be a power of two in [1, {sampler.padded_n}]."
        )
    if not 0 <= h < k:
        raise SegmentOutOfRangeError(f"Segment {h} outside [0, {k}).")


def gather_collisions(sampler: SegmentSampler, keys: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct colliding ids with their ranks, both ordered by ascending rank.

    Args:
        sampler (SegmentSampler): The structure to read.
        keys (Sequence[int]): Bucket key of the query in every table.

    Returns:
        Tuple[np.ndarray, np.ndarray]: ``(ranks, ids)`` where ``ranks`` is
        strictly increasing and ``ids[j]`` holds rank ``ranks[j]``.
    """
    rank_pieces, id_pieces = [], []
    for table, key in zip(sampler.index.tables, keys):
        start, stop = table.span(key)
        if stop > start:
            rank_pieces.append(table.ranks[start:stop])
            id_pieces.append(table.ids[start:stop])
    if not rank_pieces:
        return EMPTY_BUCKET, EMPTY_BUCKET
    ranks, first = np.unique(np.concatenate(rank_pieces), return_index=True)
    return ranks, np.concatenate(id_pieces)[first]


def _segment(sampler: SegmentSampler, vector: np.ndarray, gathered: Tuple[np.ndarray, np.ndarray],
             k: int, h: int, counters: QueryCounters) -> np.ndarray:
    ranks, ids = gathered
    width = sampler.padded_n // k
    start, stop = np.searchsorted(ranks, [h * width, (h + 1) * width])
    if stop == start:
        return EMPTY_BUCKET
    candidates = np.sort(ids[start:stop])
    counters.inspected += len(candidates)
    values = sampler.metric.values(sampler.dataset.points[candidates], vector)
    return candidates[sampler.metric.near_mask(values)]


def segment_near_neighbors(sampler: SegmentSampler, q: QueryLike, k: int, h: int,
                           counters: Optional[QueryCounters] = None) -> np.ndarray:
    """Colliding near points whose rank lies in [h * n/k, (h + 1) * n/k), sorted by id.

    n is the rank space padded to a power of two.

    Args:
        sampler (SegmentSampler): The structure to query.
        q (QueryLike): The query point.
        k (int): Number of rank segments, a power of two.
        h (int): Segment to report.
        counters (QueryCounters, optional): Receives buckets and inspected points.

    Returns:
        np.ndarray: Ids of the near points in the segment.

    Raises:
        SegmentOutOfRangeError: If k is not a power of two in [1, n] or h is
        outside [0, k).
    """
    _check_segment(sampler, k, h)
    vector = as_vector(q, sampler.dataset.dim)
    local = QueryCounters()
    keys = sampler.index.query_keys(vector)
    local.buckets += len(keys)
    result = _segment(sampler, vector, gather_collisions(sampler, keys), k, h, local)
    if counters is not None:
        counters.add(local)
    return result


def segment_loads(sampler: SegmentSampler, q: QueryLike, k: int) -> List[int]:
    """Number of colliding near points in each of the k segments."""
    _check_segment(sampler, k, 0)
    vector = as_vector(q, sampler.dataset.dim)
    gathered = gather_collisions(sampler, sampler.index.query_keys(vector))
    scratch = QueryCounters()
    return [len(_segment(sampler, vector, gathered, k, h, scratch)) for h in range(k)]


def nnis_query(sampler: SegmentSampler, q: QueryLike, rng: np.random.Generator,
               counters: Optional[QueryCounters] = None) -> SampleResult:
    """Segment rejection sampling; all randomness comes from ``rng`` and no state changes.

    k starts at the smallest power of two >= 2 * s_hat (1 when nothing
    collides) and halves after every Sigma rounds. A round draws a segment
    uniformly and accepts it with probability min(lambda_h / lambda, 1),
    returning a uniform member. When k drops below 1 the answer is None.

    The colliding buckets are gathered once into one rank-sorted array, so
    each round is a single range lookup on it.

    Args:
        sampler (SegmentSampler): The structure to query.
        q (QueryLike): The query point.
        rng (np.random.Generator): Source of every random choice of the query.
        counters (QueryCounters, optional): Receives buckets, inspected points
            and sketch merges.

    Returns:
        SampleResult: The sampled id (or None), the inspected count, the
        number of rounds and whether an acceptance probability was capped.
    """
    vector = as_vector(q, sampler.dataset.dim)
    local = QueryCounters()
    keys = sampler.index.query_keys(vector)
    local.buckets += len(keys)
    estimate = _estimate(sampler, keys, local)
    gathered = gather_collisions(sampler, keys)
    k = 1 if estimate == 0 else min(next_power_of_two(2 * estimate), sampler.padded_n)
    failures = rounds = 0
    clamped = False
    outcome = None
    while k >= 1:
        h = int(rng.integers(k))
        segment = _segment(sampler, vector, gathered, k, h, local)
        rounds += 1
        failures += 1
        if failures == sampler.sigma:
            k //= 2
            failures = 0
        load = len(segment)
        if load > sampler.lam:
            clamped = True
        if load and rng.random() < min(load / sampler.lam, 1.0):
            outcome = int(segment[rng.integers(load)])
            break
    if counters is not None:
        counters.add(local)
    if clamped:
        logger.info(
            "Acceptance probability clamped",
            extra={'event_type': 'acceptance_clamped', 'estimate': estimate, 'lam': sampler.lam}
        )
    if outcome is None:
        logger.debug(
            "Independent sampling returned no point",
            extra={'event_type': 'nnis_failure', 'estimate': estimate, 'rounds': rounds}
        )
    return SampleResult(outcome, inspected=local.inspected, rounds=rounds, clamped=clamped)
