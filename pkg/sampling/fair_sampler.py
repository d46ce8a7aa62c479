# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np
from sortedcontainers import SortedList

# Local imports
from .core import (
    Dataset, Metric, QueryCounters, QueryLike, RankPermutation, SampleResult,
    as_vector, make_rank_permutation, spawn_rngs, swap_ranks,
)
from .exceptions import SamplerModeError
from .lsh import (
    LshFamily, LshIndex, LshParams, build_index, compute_params, family_for,
    query_buckets,
)

# Standard library imports
from enum import Enum
from typing import Dict, Iterator, List, Optional
import hashlib
import logging

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
SCAN_CHUNK = 64


class SamplerMode(str, Enum):
    STATIC = "static"
    RANK_SWAP = "rank_swap"


class NnsSampler:
    """Min-rank uniform sampler over an LSH index.

    In static mode the index's rank-sorted id arrays are scanned directly and
    nothing changes after the build. In rank_swap mode every bucket is a
    ``SortedList`` of ranks, ids are recovered through ``perm.inverse`` and
    each answered query re-randomizes the returned point's rank.
    """

    def __init__(self, index: LshIndex, perm: RankPermutation, metric: Metric,
                 mode: SamplerMode = SamplerMode.STATIC,
                 rng: Optional[np.random.Generator] = None):
        self.index = index
        self.perm = perm
        self.metric = metric
        self.mode = SamplerMode(mode)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.rank_buckets: List[Dict[int, SortedList]] = []
        if self.mode is SamplerMode.RANK_SWAP:
            self.rank_buckets = [
                {key: SortedList(perm.rank[ids].tolist()) for key, ids in table.items()}
                for table in index.tables
            ]

    @property
    def dataset(self) -> Dataset:
        return self.index.dataset

    def bucket_chunks(self, table: int, key: int) -> Iterator[np.ndarray]:
        """Ids of one bucket in ascending rank order, in chunks of ``SCAN_CHUNK``."""
        if self.mode is SamplerMode.STATIC:
            bucket = self.index.tables[table]
            start, stop = bucket.span(key)
            ids = bucket.ids[start:stop]
            for start in range(0, len(ids), SCAN_CHUNK):
                yield ids[start:start + SCAN_CHUNK]
            return
        ranks = self.rank_buckets[table].get(key)
        if ranks is None:
            return
        for start in range(0, len(ranks), SCAN_CHUNK):
            chunk = np.fromiter(ranks.islice(start, start + SCAN_CHUNK), dtype=np.int64)
            yield self.perm.inverse[chunk]

    def check_consistency(self) -> bool:
        """Full scan: every bucket is rank-sorted and agrees with the permutation."""
        if not self.perm.is_bijection():
            return False
        n = self.dataset.n
        for i, table in enumerate(self.index.tables):
            seen = 0
            for key in table:
                ids = np.concatenate(list(self.bucket_chunks(i, key)) or [np.empty(0, np.int64)])
                ranks = self.perm.rank[ids]
                if np.any(np.diff(ranks) <= 0):
                    return False
                if np.any(self.index.point_keys[ids, i] != np.uint64(key)):
                    return False
                seen += len(ids)
            if seen != n:
                return False
        return True

    def digest(self) -> str:
        sha = hashlib.sha256(self.perm.rank.tobytes())
        sha.update(self.index.digest().encode())
        for table in self.rank_buckets:
            for key in sorted(table):
                sha.update(np.asarray(table[key], dtype=np.int64).tobytes())
        return sha.hexdigest()


def build_nns_sampler(dataset: Dataset, metric: Metric, mode: SamplerMode = SamplerMode.STATIC,
                      c_l: float = 3.0, seed: int = 0, family: Optional[LshFamily] = None,
                      params: Optional[LshParams] = None) -> NnsSampler:
    """Draw a rank permutation and hash functions from ``seed`` and build the sampler.

    The permutation, the hash functions and the rank-swap draws come from
    independent child streams of ``seed``.
    """
    if dataset.n < 1:
        raise ValidationError("The sampler needs a non-empty dataset.")
    perm_rng, hash_rng, query_rng = spawn_rngs(seed, 3)
    family = family if family is not None else family_for(metric, dataset.dim)
    params = params if params is not None else compute_params(family, metric, dataset.n, c_l, seed)
    perm = make_rank_permutation(dataset.n, perm_rng)
    index = build_index(dataset, family, params, perm, rng=hash_rng)
    return NnsSampler(index, perm, metric, mode, rng=query_rng)


def _first_near(sampler: NnsSampler, table: int, key: int, vector: np.ndarray,
                limit: int, counters: QueryCounters) -> List[int]:
    """Up to ``limit`` near ids of one bucket in rank order, counting inspected points."""
    found: List[int] = []
    points = sampler.dataset.points
    for ids in sampler.bucket_chunks(table, key):
        hits = np.flatnonzero(sampler.metric.near_mask(sampler.metric.values(points[ids], vector)))
        needed = limit - len(found)
        if len(hits) >= needed:
            counters.inspected += int(hits[needed - 1]) + 1
            found.extend(int(p) for p in ids[hits[:needed]])
            return found
        counters.inspected += len(ids)
        found.extend(int(p) for p in ids[hits])
    return found


def _min_rank_candidates(sampler: NnsSampler, vector: np.ndarray, limit: int,
                         counters: QueryCounters) -> List[int]:
    keys = sampler.index.query_keys(vector)
    counters.buckets += len(keys)
    candidates = set()
    for table, key in enumerate(keys):
        candidates.update(_first_near(sampler, table, key, vector, limit, counters))
    return sorted(candidates, key=sampler.perm.rank_of)


def nns_query(sampler: NnsSampler, q: QueryLike,
              counters: Optional[QueryCounters] = None) -> SampleResult:
    """The minimum-rank near point over the first near point of every colliding bucket.

    Args:
        sampler (NnsSampler): The structure to query.
        q (QueryLike): The query point.
        counters (QueryCounters, optional): Receives buckets and inspected points.

    Returns:
        SampleResult: The near point of smallest rank, or None when no
        colliding bucket holds one.
    """
    vector = as_vector(q, sampler.dataset.dim)
    local = QueryCounters()
    candidates = _min_rank_candidates(sampler, vector, 1, local)
    if counters is not None:
        counters.add(local)
    outcome = candidates[0] if candidates else None
    return SampleResult(outcome, inspected=local.inspected, rounds=1)


def nns_query_k_without_replacement(sampler: NnsSampler, q: QueryLike, k: int,
                                    counters: Optional[QueryCounters] = None) -> List[int]:
    """The k smallest-rank near points among the colliding buckets, by ascending rank."""
    if k < 1:
        raise ValidationError("k must be at least 1.")
    vector = as_vector(q, sampler.dataset.dim)
    local = QueryCounters()
    candidates = _min_rank_candidates(sampler, vector, k, local)
    if counters is not None:
        counters.add(local)
    return candidates[:k]


def _rerandomize(sampler: NnsSampler, point_id: int) -> int:
    """Swap the rank of ``point_id`` with a uniform rank at or above it; returns the partner."""
    n = sampler.perm.n
    rank_x = sampler.perm.rank_of(point_id)
    rank_y = int(sampler.rng.integers(rank_x, n))
    partner = sampler.perm.id_at(rank_y)
    if partner == point_id:
        return partner
    keys = sampler.index.point_keys
    for table, buckets in enumerate(sampler.rank_buckets):
        key_x, key_y = int(keys[point_id, table]), int(keys[partner, table])
        if key_x == key_y:
            continue
        buckets[key_x].remove(rank_x)
        buckets[key_x].add(rank_y)
        buckets[key_y].remove(rank_y)
        buckets[key_y].add(rank_x)
    swap_ranks(sampler.perm, point_id, partner)
    logger.debug(
        "Rank swapped",
        extra={
            'event_type': 'rank_swap',
            'point_id': point_id,
            'partner_id': partner,
            'old_rank': rank_x,
            'new_rank': rank_y,
        }
    )
    return partner


def _require_rank_swap(sampler: NnsSampler) -> None:
    if sampler.mode is not SamplerMode.RANK_SWAP:
        raise SamplerModeError("This query needs a sampler built in rank_swap mode.")


def nns_query_rank_swap(sampler: NnsSampler, q: QueryLike,
                        counters: Optional[QueryCounters] = None) -> SampleResult:
    """Answer like ``nns_query`` and then move the answer to a uniform rank at or above its own.

    Raises:
        SamplerModeError: If the sampler was built in static mode.
    """
    _require_rank_swap(sampler)
    result = nns_query(sampler, q, counters)
    if result.found:
        _rerandomize(sampler, result.outcome)
    return result


def nns_query_k_with_replacement(sampler: NnsSampler, q: QueryLike, k: int,
                                 counters: Optional[QueryCounters] = None) -> List[Optional[int]]:
    """Ask the same query k times, re-randomizing the answer's rank after each.

    Args:
        sampler (NnsSampler): A sampler built in rank_swap mode.
        q (QueryLike): The query point.
        k (int): Number of draws.
        counters (QueryCounters, optional): Receives the work of all k draws.

    Returns:
        List[int | None]: k independent uniform near points (None when a
        draw finds nothing).

    Raises:
        SamplerModeError: If the sampler was built in static mode.
        ValidationError: If k is below 1.
    """
    _require_rank_swap(sampler)
    if k < 1:
        raise ValidationError("k must be at least 1.")
    return [nns_query_rank_swap(sampler, q, counters).outcome for _ in range(k)]


def naive_fair_query(index: LshIndex, q: QueryLike, metric: Metric, rng: np.random.Generator,
                     counters: Optional[QueryCounters] = None) -> SampleResult:
    """Uniform choice among every near point of the colliding buckets (full scan)."""
    vector = as_vector(q, index.dataset.dim)
    local = QueryCounters()
    buckets = query_buckets(index, vector, local)
    candidates = np.unique(np.concatenate(buckets)) if buckets else np.empty(0, np.int64)
    local.inspected += sum(len(bucket) for bucket in buckets)
    if counters is not None:
        counters.add(local)
    near = candidates[metric.near_mask(metric.values(index.dataset.points[candidates], vector))]
    if near.size == 0:
        return SampleResult(None, inspected=local.inspected, rounds=1)
    return SampleResult(int(rng.choice(near)), inspected=local.inspected, rounds=1)
