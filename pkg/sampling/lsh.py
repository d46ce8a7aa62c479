# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np
from scipy.stats import norm

# Local imports
from .core import (
    Dataset, Metric, MetricKind, QueryCounters, QueryLike, RankPermutation,
    as_vector, ceil_log,
)

# Standard library imports
from dataclasses import dataclass
from enum import Enum
from collections.abc import Mapping
from typing import Iterator, List, Optional, Sequence, Tuple
import hashlib
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
KEY_MULTIPLIER = np.uint64(0x9E3779B97F4A7C15)
MIN_SENSITIVITY_GAP = 1e-9
EMPTY_BUCKET = np.empty(0, dtype=np.int64)
HASH_BLOCK_VALUES = 1 << 22


class FamilyKind(str, Enum):
    BIT_SAMPLING = "bit_sampling"
    HYPERPLANE = "hyperplane"
    P_STABLE = "p_stable"


DEFAULT_FAMILY = {
    MetricKind.HAMMING: FamilyKind.BIT_SAMPLING,
    MetricKind.EUCLIDEAN: FamilyKind.P_STABLE,
    MetricKind.INNER_PRODUCT: FamilyKind.HYPERPLANE,
}


@dataclass(frozen=True)
class HashBank:
    """A batch of independently drawn base hash functions of one family."""

    kind: FamilyKind
    coordinates: Optional[np.ndarray] = None
    projections: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    width: float = 1.0

    @property
    def size(self) -> int:
        if self.kind is FamilyKind.BIT_SAMPLING:
            return int(self.coordinates.shape[0])
        return int(self.projections.shape[0])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Hash values of every row of ``points`` under every function, shape (n, size)."""
        points = np.atleast_2d(points)
        if self.kind is FamilyKind.BIT_SAMPLING:
            return np.rint(points[:, self.coordinates]).astype(np.int64)
        projected = points @ self.projections.T
        if self.kind is FamilyKind.HYPERPLANE:
            return (projected >= 0).astype(np.int64)
        return np.floor((projected + self.offsets) / self.width).astype(np.int64)


@dataclass(frozen=True)
class LshFamily:
    """Locality-sensitive family with a closed-form collision curve.

    ``width`` is the p-stable bucket width w; it defaults to the metric's r
    when the family is created through ``family_for``.
    """

    kind: FamilyKind
    dim: int
    width: float = 1.0

    def collision_probability(self, value: float) -> float:
        """Probability that one base hash collides for two points at ``value``.

        ``value`` is a Hamming distance for bit sampling, an inner product of
        unit vectors for hyperplanes and a Euclidean distance for p-stable.
        """
        if self.kind is FamilyKind.BIT_SAMPLING:
            return max(0.0, 1.0 - value / self.dim)
        if self.kind is FamilyKind.HYPERPLANE:
            value = min(1.0, max(-1.0, value))
            return 1.0 - math.acos(value) / math.pi
        if value <= 0:
            return 1.0
        ratio = self.width / value
        return float(
            1.0 - 2.0 * norm.cdf(-ratio)
            - 2.0 / (math.sqrt(2.0 * math.pi) * ratio) * (1.0 - math.exp(-ratio * ratio / 2.0))
        )

    def base_probabilities(self, metric: Metric) -> Tuple[float, float]:
        """(p1, p2) at the near and far thresholds of ``metric``."""
        _check_compatible(self, metric)
        return (
            self.collision_probability(metric.near_threshold),
            self.collision_probability(metric.far_threshold),
        )

    def draw(self, count: int, rng: np.random.Generator) -> HashBank:
        if self.kind is FamilyKind.BIT_SAMPLING:
            return HashBank(self.kind, coordinates=rng.integers(0, self.dim, size=count))
        projections = rng.standard_normal((count, self.dim))
        if self.kind is FamilyKind.HYPERPLANE:
            return HashBank(self.kind, projections=projections)
        offsets = rng.uniform(0.0, self.width, size=count)
        return HashBank(self.kind, projections=projections, offsets=offsets, width=self.width)


def _check_compatible(family: LshFamily, metric: Metric) -> None:
    expected = {
        FamilyKind.BIT_SAMPLING: MetricKind.HAMMING,
        FamilyKind.HYPERPLANE: MetricKind.INNER_PRODUCT,
        FamilyKind.P_STABLE: MetricKind.EUCLIDEAN,
    }[family.kind]
    if metric.kind is not expected:
        raise ValidationError(
            f"The {family.kind.value} family is not sensitive for the {metric.kind.value} metric."
        )


def family_for(metric: Metric, dim: int, kind: Optional[FamilyKind] = None,
               width: Optional[float] = None) -> LshFamily:
    """The conventional family for ``metric`` (p-stable width defaults to r)."""
    kind = FamilyKind(kind) if kind is not None else DEFAULT_FAMILY[metric.kind]
    if kind is FamilyKind.P_STABLE:
        width = width if width is not None else metric.r
        if width <= 0:
            raise ValidationError("The p-stable width must be positive.")
        return LshFamily(kind, dim, float(width))
    return LshFamily(kind, dim)


@dataclass(frozen=True)
class LshParams:
    """Concatenation length K, table count L and the derived collision rates."""

    k: int
    l: int
    seed: int
    p1: float
    p2: float
    rho: float
    p1_base: float
    p2_base: float


def compute_params(family: LshFamily, metric: Metric, n: int, c_l: float = 3.0,
                   seed: int = 0) -> LshParams:
    """Pick K so that p2_base^K <= 1/n and L = ceil(C_L ln n / p1_base^K).

    Raises:
        ValidationError: If the family is not sensitive for ``metric``
        (p1_base <= p2_base) or the constants are out of range.
    """
    if n < 1:
        raise ValidationError("Parameters need at least one point.")
    if c_l < 1:
        raise ValidationError("The table constant C_L must be at least 1.")
    p1_base, p2_base = family.base_probabilities(metric)
    if not (0.0 < p2_base < 1.0 and 0.0 < p1_base < 1.0) or p1_base - p2_base <= MIN_SENSITIVITY_GAP:
        raise ValidationError(
            f"Family {family.kind.value} is not sensitive here: p1={p1_base:.6g}, p2={p2_base:.6g}."
        )
    k = max(1, ceil_log(math.log(1.0 / n) / math.log(p2_base))) if n > 1 else 1
    p1 = p1_base ** k
    l = max(1, ceil_log(c_l * math.log(n) / p1))
    return LshParams(
        k=k, l=l, seed=seed, p1=p1, p2=p2_base ** k,
        rho=math.log(p1_base) / math.log(p2_base), p1_base=p1_base, p2_base=p2_base,
    )


def stack_banks(banks: Sequence[HashBank]) -> Optional[HashBank]:
    """One bank evaluating every function of ``banks`` in a single pass.

    Columns of the stacked evaluation come bank after bank, so reshaping
    them to ``(n, len(banks), size)`` recovers the per-bank hash values.
    """
    if not banks:
        return None
    first = banks[0]
    if first.kind is FamilyKind.BIT_SAMPLING:
        return HashBank(first.kind, coordinates=np.concatenate([bank.coordinates for bank in banks]))
    offsets = None
    if first.kind is FamilyKind.P_STABLE:
        offsets = np.concatenate([bank.offsets for bank in banks])
    return HashBank(
        first.kind,
        projections=np.concatenate([bank.projections for bank in banks]),
        offsets=offsets,
        width=first.width,
    )


def encode_keys(hashes: np.ndarray) -> np.ndarray:
    """Polynomial 64-bit encoding of the last axis of ``hashes``."""
    values = hashes.astype(np.int64).view(np.uint64)
    keys = np.zeros(values.shape[:-1], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(values.shape[-1]):
            keys = keys * KEY_MULTIPLIER + values[..., j]
    return keys


class BucketTable(Mapping):
    """One hash table stored as offset arrays over a single id array.

    Buckets are laid out back to back in ``ids``, sorted by key and then by
    rank. ``keys`` holds the distinct bucket keys in ascending order and
    bucket ``j`` spans ``ids[starts[j]:starts[j + 1]]``. ``ranks`` is parallel
    to ``ids`` and holds the ranks at build time. Reading a bucket returns a
    view, never a copy.
    """

    def __init__(self, keys: np.ndarray, starts: np.ndarray, ids: np.ndarray, ranks: np.ndarray):
        self.keys = keys
        self.starts = starts
        self.ids = ids
        self.ranks = ranks

    @classmethod
    def from_keys(cls, keys: np.ndarray, rank: np.ndarray) -> 'BucketTable':
        """Group point ids by ``keys`` with ascending ``rank`` inside each bucket.

        Args:
            keys (np.ndarray): Bucket key of every point, uint64.
            rank (np.ndarray): Rank of every point.

        Returns:
            BucketTable: The table holding every point exactly once.
        """
        order = np.lexsort((rank, keys))
        sorted_keys = keys[order]
        heads = np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]]) if len(keys) else EMPTY_BUCKET
        starts = np.append(heads, len(keys)).astype(np.int64)
        ids = order.astype(np.int64)
        return cls(sorted_keys[heads], starts, ids, rank[ids])

    def span(self, key: int) -> Tuple[int, int]:
        """Start and stop offsets of bucket ``key``; (0, 0) when absent."""
        key = np.uint64(key)
        j = int(np.searchsorted(self.keys, key))
        if j < len(self.keys) and self.keys[j] == key:
            return int(self.starts[j]), int(self.starts[j + 1])
        return 0, 0

    def __getitem__(self, key: int) -> np.ndarray:
        start, stop = self.span(key)
        if start == stop:
            raise KeyError(key)
        return self.ids[start:stop]

    def __contains__(self, key) -> bool:
        start, stop = self.span(key)
        return stop > start

    def __iter__(self) -> Iterator[int]:
        return (int(key) for key in self.keys)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    def nbytes(self) -> int:
        return self.keys.nbytes + self.starts.nbytes + self.ids.nbytes + self.ranks.nbytes


class LshIndex:
    """L hash tables whose buckets hold point ids sorted by ascending rank.

    ``point_keys[p, i]`` caches the bucket key of point ``p`` in table ``i``.
    """

    def __init__(self, dataset: Dataset, family: LshFamily, params: LshParams,
                 banks: List[HashBank], tables: List[BucketTable],
                 point_keys: np.ndarray):
        self.dataset = dataset
        self.family = family
        self.params = params
        self.banks = banks
        self.tables = tables
        self.point_keys = point_keys
        self.stacked = stack_banks(banks)

    @property
    def num_tables(self) -> int:
        return len(self.tables)

    def query_keys(self, q: QueryLike) -> List[int]:
        if self.stacked is None:
            return []
        vector = as_vector(q, self.dataset.dim)
        return [int(key) for key in hash_rows(self.stacked, vector[None, :], len(self.banks))[0]]

    def digest(self) -> str:
        sha = hashlib.sha256()
        for table in self.tables:
            sha.update(table.keys.tobytes())
            sha.update(table.starts.tobytes())
            sha.update(table.ids.tobytes())
        return sha.hexdigest()


def hash_rows(stacked: HashBank, points: np.ndarray, tables: int) -> np.ndarray:
    """Bucket keys of every row of ``points`` in every table, shape (n, tables).

    Rows are hashed in blocks so that one block holds at most
    ``HASH_BLOCK_VALUES`` hash values.
    """
    n = points.shape[0]
    keys = np.zeros((n, tables), dtype=np.uint64)
    rows = max(1, HASH_BLOCK_VALUES // max(1, stacked.size))
    for start in range(0, n, rows):
        values = stacked.evaluate(points[start:start + rows])
        keys[start:start + rows] = encode_keys(values.reshape(values.shape[0], tables, -1))
    return keys


def build_index(dataset: Dataset, family: LshFamily, params: LshParams,
                perm: RankPermutation, rng: Optional[np.random.Generator] = None) -> LshIndex:
    """Hash every point into L tables and sort each bucket by rank.

    Hash functions are drawn from ``rng`` when given, otherwise from
    ``params.seed``.

    Args:
        dataset (Dataset): The points to index.
        family (LshFamily): The base hash family.
        params (LshParams): Concatenation length and table count.
        perm (RankPermutation): Ranks ordering the points inside each bucket.
        rng (np.random.Generator, optional): Source of the hash functions.

    Returns:
        LshIndex: The index, one ``BucketTable`` per repetition.

    Raises:
        ValidationError: If ``perm`` does not cover the dataset.
    """
    if perm.n != dataset.n and dataset.n > 0:
        raise ValidationError("The rank permutation does not cover the dataset.")
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    banks = [family.draw(params.k, rng) for _ in range(params.l)]
    n = dataset.n
    if n:
        point_keys = hash_rows(stack_banks(banks), dataset.points, params.l)
        rank = perm.rank
    else:
        point_keys = np.zeros((0, params.l), dtype=np.uint64)
        rank = EMPTY_BUCKET
    tables = [BucketTable.from_keys(point_keys[:, i], rank) for i in range(params.l)]
    logger.info(
        "LSH index built",
        extra={
            'event_type': 'index_build',
            'n': n,
            'tables': params.l,
            'concatenation': params.k,
            'family': family.kind.value,
        }
    )
    return LshIndex(dataset, family, params, banks, tables, point_keys)


def query_buckets(index: LshIndex, q: QueryLike,
                  counters: Optional[QueryCounters] = None) -> List[np.ndarray]:
    """The L buckets colliding with ``q``, in table order (empty arrays for misses)."""
    keys = index.query_keys(q)
    if counters is not None:
        counters.buckets += len(keys)
    return [table.get(key, EMPTY_BUCKET) for table, key in zip(index.tables, keys)]


def colliding_ids(index: LshIndex, q: QueryLike) -> np.ndarray:
    """The deduplicated set S_q of ids sharing at least one bucket with ``q``."""
    buckets = query_buckets(index, q)
    if not buckets:
        return EMPTY_BUCKET
    return np.unique(np.concatenate(buckets))


def all_near_recalled(index: LshIndex, q: QueryLike, near_ids: Sequence[int]) -> bool:
    return bool(np.isin(np.asarray(near_ids, dtype=np.int64), colliding_ids(index, q)).all())


def standard_ann_query(index: LshIndex, q: QueryLike, metric: Metric,
                       counters: Optional[QueryCounters] = None) -> Optional[int]:
    """Classic (c, r)-ANN loop: first point within cr, giving up after 3L far points."""
    vector = as_vector(q, index.dataset.dim)
    far_budget = 3 * index.num_tables
    far_seen = 0
    for bucket in query_buckets(index, vector, counters):
        for point_id in bucket:
            if counters is not None:
                counters.inspected += 1
            value = metric.values(index.dataset.points[point_id:point_id + 1], vector)
            if not metric.far_mask(value)[0]:
                return int(point_id)
            far_seen += 1
            if far_seen > far_budget:
                return None
    return None


def near_neighbor_query(index: LshIndex, q: QueryLike, metric: Metric,
                        counters: Optional[QueryCounters] = None) -> Optional[int]:
    """First r-near point over the colliding buckets, scanning them completely."""
    vector = as_vector(q, index.dataset.dim)
    for bucket in query_buckets(index, vector, counters):
        if not len(bucket):
            continue
        near = metric.near_mask(metric.values(index.dataset.points[bucket], vector))
        hits = np.flatnonzero(near)
        if counters is not None:
            counters.inspected += int(hits[0]) + 1 if len(hits) else len(bucket)
        if len(hits):
            return int(bucket[hits[0]])
    return None
