# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np

# Local imports
from .exceptions import DimensionMismatchError, RankOutOfRangeError

# Standard library imports
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence, Union
import hashlib
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
UNIT_NORM_TOLERANCE = 1e-6


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HAMMING = "hamming"
    INNER_PRODUCT = "inner_product"


class Proximity(str, Enum):
    NEAR = "near"
    CNEAR = "cnear"
    FAR = "far"


@dataclass(frozen=True)
class Point:
    """A dataset point: its coordinates and its position in insertion order."""

    coords: np.ndarray
    id: int

    @property
    def dim(self) -> int:
        return int(self.coords.shape[0])


class Dataset:
    """Immutable ground set S of n points in d dimensions.

    Point ids are row positions, so id ``i`` always refers to ``points[i]``.
    An empty dataset still carries its dimension.
    """

    def __init__(self, points, dim: Optional[int] = None):
        array = np.array(points, dtype=np.float64)
        if array.size == 0:
            if dim is None:
                raise ValidationError("An empty dataset needs an explicit dimension.")
            array = array.reshape(0, dim)
        if array.ndim != 2:
            raise ValidationError("Dataset points must form an n x d matrix.")
        if array.shape[1] < 1:
            raise ValidationError("Dataset dimension must be at least 1.")
        if dim is not None and array.shape[1] != dim:
            raise DimensionMismatchError(dim, array.shape[1])
        array.setflags(write=False)
        self._points = array

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return int(self._points.shape[0])

    @property
    def dim(self) -> int:
        return int(self._points.shape[1])

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Point]:
        for i in range(self.n):
            yield self.point(i)

    def point(self, point_id: int) -> Point:
        if not 0 <= point_id < self.n:
            raise RankOutOfRangeError(f"Point id {point_id} outside [0, {self.n}).")
        return Point(coords=self._points[point_id], id=point_id)

    def digest(self) -> str:
        return hashlib.sha256(self._points.tobytes()).hexdigest()


QueryLike = Union[Point, Sequence[float], np.ndarray]


def as_vector(q: QueryLike, dim: Optional[int] = None) -> np.ndarray:
    """Return the coordinates of ``q`` as a float vector, checking its dimension."""
    coords = q.coords if isinstance(q, Point) else q
    vector = np.asarray(coords, dtype=np.float64).reshape(-1)
    if dim is not None and vector.shape[0] != dim:
        raise DimensionMismatchError(dim, vector.shape[0])
    return vector


def is_unit(vector: np.ndarray, tolerance: float = UNIT_NORM_TOLERANCE) -> bool:
    return abs(float(np.linalg.norm(vector)) - 1.0) <= tolerance


@dataclass(frozen=True)
class Metric:
    """Distance or similarity plus the near/far thresholds used to classify.

    For euclidean and hamming the thresholds are ``r`` and ``c``; for
    inner_product they are ``alpha`` and ``beta`` and larger values are
    nearer.
    """

    kind: MetricKind
    r: Optional[float] = None
    c: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind is MetricKind.INNER_PRODUCT:
            if self.alpha is None or self.beta is None:
                raise ValidationError("The inner_product metric needs alpha and beta.")
            if not -1.0 < self.beta < self.alpha < 1.0:
                raise ValidationError("Thresholds must satisfy -1 < beta < alpha < 1.")
        else:
            if self.r is None or self.c is None:
                raise ValidationError(f"The {self.kind.value} metric needs r and c.")
            if self.r <= 0:
                raise ValidationError("The radius r must be positive.")
            if self.c <= 1:
                raise ValidationError("The approximation factor c must exceed 1.")

    @classmethod
    def euclidean(cls, r: float, c: float) -> "Metric":
        return cls(MetricKind.EUCLIDEAN, r=r, c=c)

    @classmethod
    def hamming(cls, r: float, c: float) -> "Metric":
        return cls(MetricKind.HAMMING, r=r, c=c)

    @classmethod
    def inner_product(cls, alpha: float, beta: float) -> "Metric":
        return cls(MetricKind.INNER_PRODUCT, alpha=alpha, beta=beta)

    @property
    def is_similarity(self) -> bool:
        return self.kind is MetricKind.INNER_PRODUCT

    @property
    def near_threshold(self) -> float:
        return self.alpha if self.is_similarity else self.r

    @property
    def far_threshold(self) -> float:
        """cr for distances, beta for inner products."""
        return self.beta if self.is_similarity else self.r * self.c

    def values(self, points: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Distance (or inner product) from every row of ``points`` to ``q``."""
        if points.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        if self.kind is MetricKind.EUCLIDEAN:
            return np.linalg.norm(points - q, axis=1)
        if self.kind is MetricKind.HAMMING:
            return np.count_nonzero(points != q, axis=1).astype(np.float64)
        return points @ q

    def near_mask(self, values: np.ndarray) -> np.ndarray:
        if self.is_similarity:
            return values >= self.alpha
        return values <= self.r

    def far_mask(self, values: np.ndarray) -> np.ndarray:
        if self.is_similarity:
            return values < self.beta
        return values > self.r * self.c

    def classify_value(self, value: float) -> Proximity:
        if self.is_similarity:
            if value >= self.alpha:
                return Proximity.NEAR
            return Proximity.CNEAR if value >= self.beta else Proximity.FAR
        if value <= self.r:
            return Proximity.NEAR
        return Proximity.CNEAR if value <= self.r * self.c else Proximity.FAR

    def classify(self, p: QueryLike, q: QueryLike) -> Proximity:
        return self.classify_value(distance(self, p, q))


def distance(metric: Metric, p: QueryLike, q: QueryLike) -> float:
    """Euclidean distance, Hamming distance or inner product of ``p`` and ``q``.

    Raises:
        DimensionMismatchError: If the two points differ in dimension.
    """
    pv = as_vector(p)
    qv = as_vector(q, pv.shape[0])
    if metric.kind is MetricKind.EUCLIDEAN:
        return float(np.linalg.norm(pv - qv))
    if metric.kind is MetricKind.HAMMING:
        return float(np.count_nonzero(pv != qv))
    return float(pv @ qv)


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Seeded PCG64 generator; equal seeds give equal draws."""
    return np.random.default_rng(seed)


def spawn_rngs(seed: Union[int, Sequence[int]], count: int) -> list:
    """Independent child generators derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


@dataclass(eq=False)
class RankPermutation:
    """Bijection between point ids and ranks, with its inverse."""

    rank: np.ndarray
    inverse: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rank = np.asarray(self.rank, dtype=np.int64)
        if self.inverse is None:
            self.inverse = np.empty_like(self.rank)
            self.inverse[self.rank] = np.arange(self.rank.shape[0], dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.rank.shape[0])

    def rank_of(self, point_id: int) -> int:
        return int(self.rank[point_id])

    def id_at(self, rank: int) -> int:
        return int(self.inverse[rank])

    def is_bijection(self) -> bool:
        n = self.n
        ids = np.arange(n)
        return (
            np.array_equal(np.sort(self.rank), ids)
            and np.array_equal(self.inverse[self.rank], ids)
            and np.array_equal(self.rank[self.inverse], ids)
        )

    def copy(self) -> "RankPermutation":
        return RankPermutation(self.rank.copy(), self.inverse.copy())

    def digest(self) -> str:
        return hashlib.sha256(self.rank.tobytes()).hexdigest()


def make_rank_permutation(n: int, rng: np.random.Generator) -> RankPermutation:
    """Uniformly random rank assignment (Fisher-Yates via ``Generator.permutation``).

    Args:
        n (int): Number of points.
        rng (np.random.Generator): Source of the permutation.

    Returns:
        RankPermutation: ``rank[p]`` for every id and its inverse.
    """
    if n < 1:
        raise ValidationError("A rank permutation needs n >= 1.")
    return RankPermutation(rng.permutation(n).astype(np.int64))


def swap_ranks(perm: RankPermutation, id_a: int, id_b: int) -> RankPermutation:
    """Exchange the ranks of two points in place and return the permutation."""
    for point_id in (id_a, id_b):
        if not 0 <= point_id < perm.n:
            raise RankOutOfRangeError(f"Point id {point_id} outside [0, {perm.n}).")
    rank_a, rank_b = perm.rank[id_a], perm.rank[id_b]
    perm.rank[id_a], perm.rank[id_b] = rank_b, rank_a
    perm.inverse[rank_a], perm.inverse[rank_b] = id_b, id_a
    return perm


@dataclass
class QueryCounters:
    """Exact work counters accumulated by queries (for benchmarks)."""

    inspected: int = 0
    buckets: int = 0
    sketch_merges: int = 0

    def add(self, other: "QueryCounters") -> None:
        self.inspected += other.inspected
        self.buckets += other.buckets
        self.sketch_merges += other.sketch_merges


@dataclass(frozen=True)
class SampleResult:
    """Outcome of one sampling query; ``outcome`` is None for the no-answer case."""

    outcome: Optional[int]
    inspected: int = 0
    rounds: int = 0
    clamped: bool = False

    @property
    def found(self) -> bool:
        return self.outcome is not None


def ceil_log(value: float) -> int:
    """``ceil(value)`` that tolerates floating noise just above an integer."""
    return int(math.ceil(value - 1e-9))


def next_power_of_two(value: int) -> int:
    return 1 if value <= 1 else 1 << (int(value) - 1).bit_length()
