"""Tensored Gaussian filter index for unit vectors under inner-product similarity.

A copy draws t parts of m' standard normal vectors. A point lives in the
bucket whose key is the tuple of its per-part argmax indices, so every
point is stored once per copy. A query marks, per part, every filter whose
projection is within f(alpha, eps) of alpha times the best projection, and
visits the non-empty buckets of the cross product in lexicographic order.
"""

# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np

# Local imports
from .core import Dataset, QueryCounters, QueryLike, SampleResult, as_vector, is_unit, spawn_rngs
from .exceptions import NotUnitNormError

# Standard library imports
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Tuple
import hashlib
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
UNIT_TOLERANCE = 1e-6


def f_threshold(alpha: float, eps: float) -> float:
    """Query slack sqrt(2 (1 - alpha^2) ln(1/eps)) below alpha times the best projection."""
    if not -1.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (-1, 1].")
    if not 0.0 < eps <= 1.0:
        raise ValidationError("eps must lie in (0, 1].")
    return math.sqrt(max(0.0, 2.0 * (1.0 - alpha * alpha) * math.log(1.0 / eps)))


def rho_exponent(alpha: float, beta: float) -> float:
    """(1 - alpha^2)(1 - beta^2) / (1 - alpha beta)^2."""
    if not -1.0 < beta <= alpha < 1.0:
        raise ValidationError("Thresholds must satisfy -1 < beta <= alpha < 1.")
    return (1.0 - alpha * alpha) * (1.0 - beta * beta) / (1.0 - alpha * beta) ** 2


def _ceil_root(value: int, degree: int) -> int:
    """Smallest integer r >= 1 with r ** degree >= value."""
    root = max(1, int(round(value ** (1.0 / degree))))
    while root ** degree < value:
        root += 1
    while root > 1 and (root - 1) ** degree >= value:
        root -= 1
    return root


@dataclass(frozen=True)
class FilterShape:
    """Part count t, filter budget m, per-part count m' and effective m = m'^t."""

    parts: int
    m: int
    per_part: int
    effective_m: int


def filter_parts(alpha: float) -> int:
    """Number of tensor parts t = ceil(1 / (1 - alpha^2))."""
    if not -1.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (-1, 1).")
    return max(1, int(math.ceil(1.0 / (1.0 - alpha * alpha) - 1e-9)))


def choose_m(n: int, alpha: float, beta: float) -> FilterShape:
    """m = ceil(n^((1 - beta^2) / (1 - alpha beta)^2)) rounded up to a perfect t-th power."""
    if not -1.0 < beta < alpha < 1.0:
        raise ValidationError("Thresholds must satisfy -1 < beta < alpha < 1.")
    parts = filter_parts(alpha)
    if n <= 1:
        return FilterShape(parts, 1, 1, 1)
    exponent = (1.0 - beta * beta) / (1.0 - alpha * beta) ** 2
    value = n ** exponent
    m = max(1, math.ceil(value * (1.0 - 1e-12)))
    per_part = _ceil_root(m, parts)
    return FilterShape(parts, m, per_part, per_part ** parts)


def shape_for(parts: int, per_part: int) -> FilterShape:
    """An explicit filter shape of ``per_part ** parts`` buckets.

    Args:
        parts (int): Number of tensor parts t.
        per_part (int): Filters per part m'.

    Returns:
        FilterShape: The shape with m = m'^t.

    Raises:
        ValidationError: If either count is below 1.
    """
    if parts < 1 or per_part < 1:
        raise ValidationError("Filter parts and per-part counts must be at least 1.")
    return FilterShape(parts, per_part ** parts, per_part, per_part ** parts)


def filter_repetitions(p: float, delta: float, alpha: float) -> int:
    """R = ceil(ln(1/delta) * p^(-1/(1 - alpha^2))) independent copies."""
    if not 0.0 < p <= 1.0:
        raise ValidationError("The per-copy success probability must lie in (0, 1].")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1).")
    if not -1.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (-1, 1).")
    return max(1, math.ceil(math.log(1.0 / delta) * p ** (-1.0 / (1.0 - alpha * alpha)) - 1e-9))


def _check_unit_rows(points: np.ndarray) -> None:
    if points.shape[0] == 0:
        return
    norms = np.linalg.norm(points, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOLERANCE)
    if bad.size:
        raise NotUnitNormError(f"Point {int(bad[0])} has norm {norms[bad[0]]:.9g}, expected 1.")


def _unit_query(q: QueryLike, dim: int) -> np.ndarray:
    vector = as_vector(q, dim)
    if not is_unit(vector, UNIT_TOLERANCE):
        raise NotUnitNormError(f"Query has norm {np.linalg.norm(vector):.9g}, expected 1.")
    return vector


def encode_digits(digits: np.ndarray, per_part: int) -> np.ndarray:
    keys = np.zeros(digits.shape[0], dtype=np.int64)
    for i in range(digits.shape[1]):
        keys = keys * per_part + digits[:, i]
    return keys


def decode_keys(keys: np.ndarray, parts: int, per_part: int) -> np.ndarray:
    digits = np.zeros((keys.shape[0], parts), dtype=np.int64)
    rest = keys.copy()
    for i in reversed(range(parts)):
        digits[:, i] = rest % per_part
        rest //= per_part
    return digits


class FilterCopy:
    """One tensored filter family and the non-empty buckets it induces.

    Bucket keys are big-endian mixed-radix encodings of (j_1, ..., j_t) so
    that ascending keys follow lexicographic tuple order.
    """

    def __init__(self, vectors: np.ndarray, buckets: Dict[int, np.ndarray], point_keys: np.ndarray):
        self.vectors = vectors
        self.buckets = buckets
        self.point_keys = point_keys
        self.sorted_keys = np.array(sorted(buckets), dtype=np.int64)
        self.key_digits = decode_keys(self.sorted_keys, self.parts, self.per_part)

    @property
    def parts(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def per_part(self) -> int:
        return int(self.vectors.shape[1])

    def digest_into(self, sha) -> None:
        sha.update(self.vectors.tobytes())
        for key in self.sorted_keys:
            sha.update(int(key).to_bytes(8, "little"))
            sha.update(self.buckets[int(key)].tobytes())


def build_filter_copy(points: np.ndarray, shape: FilterShape, rng: np.random.Generator) -> FilterCopy:
    """Draw t x m' Gaussian vectors and bucket every point by its per-part argmax."""
    dim = points.shape[1]
    vectors = rng.standard_normal((shape.parts, shape.per_part, dim))
    n = points.shape[0]
    digits = np.zeros((n, shape.parts), dtype=np.int64)
    for i in range(shape.parts):
        if n:
            # argmax keeps the lowest index on ties
            digits[:, i] = np.argmax(points @ vectors[i].T, axis=1)
    keys = encode_digits(digits, shape.per_part)
    order = np.argsort(keys, kind="stable")
    buckets: Dict[int, np.ndarray] = {}
    if n:
        sorted_keys = keys[order]
        starts = np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]])
        for ids in np.split(order, starts[1:]):
            buckets[int(keys[ids[0]])] = np.sort(ids).astype(np.int64)
    return FilterCopy(vectors, buckets, keys)


def threshold_sets(copy: FilterCopy, q: QueryLike, alpha: float, eps: float) -> List[np.ndarray]:
    """Per part, the filters j with <q, a_j> >= alpha * max_j <q, a_j> - f(alpha, eps)."""
    vector = as_vector(q, copy.vectors.shape[2])
    slack = f_threshold(alpha, eps)
    sets = []
    for i in range(copy.parts):
        projections = copy.vectors[i] @ vector
        sets.append(np.flatnonzero(projections >= alpha * projections.max() - slack))
    return sets


def marked_buckets(copy: FilterCopy, q: QueryLike, alpha: float, eps: float) -> List[int]:
    """Keys of the non-empty buckets in I_1 x ... x I_t, in lexicographic order."""
    sets = threshold_sets(copy, q, alpha, eps)
    combinations = math.prod(len(s) for s in sets)
    if combinations <= len(copy.sorted_keys):
        keys = []
        for digits in product(*sets):
            key = 0
            for j in digits:
                key = key * copy.per_part + int(j)
            if key in copy.buckets:
                keys.append(key)
        return keys
    inside = np.ones(len(copy.sorted_keys), dtype=bool)
    for i, allowed in enumerate(sets):
        inside &= np.isin(copy.key_digits[:, i], allowed)
    return [int(key) for key in copy.sorted_keys[inside]]


@dataclass(frozen=True)
class FilterParams:
    """Thresholds, filter eps and copy count; parts/per_part override ``choose_m``."""

    alpha: float
    beta: float
    eps: float = 0.1
    repetitions: int = 1
    parts: Optional[int] = None
    per_part: Optional[int] = None

    def __post_init__(self):
        if not -1.0 < self.beta < self.alpha < 1.0:
            raise ValidationError("Thresholds must satisfy -1 < beta < alpha < 1.")
        if not 0.0 < self.eps <= 1.0:
            raise ValidationError("Filter eps must lie in (0, 1].")
        if self.repetitions < 1:
            raise ValidationError("At least one filter copy is required.")

    def shape(self, n: int) -> FilterShape:
        if self.parts is None and self.per_part is None:
            return choose_m(n, self.alpha, self.beta)
        parts = self.parts if self.parts is not None else filter_parts(self.alpha)
        per_part = self.per_part
        if per_part is None:
            per_part = _ceil_root(choose_m(n, self.alpha, self.beta).m, parts)
        return shape_for(parts, per_part)


class FilterIndex:
    """R independent filter copies over one dataset, queried read-only."""

    def __init__(self, dataset: Dataset, params: FilterParams, shape: FilterShape,
                 copies: List[FilterCopy]):
        self.dataset = dataset
        self.params = params
        self.shape = shape
        self.copies = copies

    def digest(self) -> str:
        sha = hashlib.sha256()
        for copy in self.copies:
            copy.digest_into(sha)
        return sha.hexdigest()


def filter_build(dataset: Dataset, params: FilterParams, rng: np.random.Generator) -> FilterIndex:
    """Build ``params.repetitions`` copies.

    Raises:
        NotUnitNormError: If any dataset point is not unit length.
    """
    _check_unit_rows(dataset.points)
    shape = params.shape(dataset.n)
    copies = [build_filter_copy(dataset.points, shape, rng) for _ in range(params.repetitions)]
    logger.info(
        "Filter index built",
        extra={
            'event_type': 'filter_build',
            'n': dataset.n,
            'copies': len(copies),
            'parts': shape.parts,
            'per_part': shape.per_part,
        }
    )
    return FilterIndex(dataset, params, shape, copies)


def filter_query(index: FilterIndex, q: QueryLike,
                 counters: Optional[QueryCounters] = None) -> Optional[int]:
    """First id with <p, q> >= beta over the marked buckets of every copy, else None.

    Args:
        index (FilterIndex): The filter copies to search.
        q (QueryLike): A unit query vector.
        counters (QueryCounters, optional): Receives visited buckets and
            inspected points.

    Returns:
        int | None: The first beta-similar id found in copy order.

    Raises:
        NotUnitNormError: If ``q`` is not unit length.
    """
    vector = _unit_query(q, index.dataset.dim)
    params = index.params
    points = index.dataset.points
    for copy in index.copies:
        for key in marked_buckets(copy, vector, params.alpha, params.eps):
            ids = copy.buckets[key]
            similar = np.flatnonzero(points[ids] @ vector >= params.beta)
            if counters is not None:
                counters.buckets += 1
                counters.inspected += int(similar[0]) + 1 if similar.size else len(ids)
            if similar.size:
                return int(ids[similar[0]])
    return None


class NnisFilterIndex:
    """L_f filter copies with per-point back-references for the alpha-NNIS loop.

    ``back_refs[p, c]`` is the key of the bucket holding p in copy c. Queries
    evict far points into a private overlay, so the shared buckets never
    change and queries may run concurrently.
    """

    def __init__(self, dataset: Dataset, alpha: float, beta: float, eps: float,
                 shape: FilterShape, copies: List[FilterCopy]):
        self.dataset = dataset
        self.alpha = alpha
        self.beta = beta
        self.eps = eps
        self.shape = shape
        self.copies = copies
        self.back_refs = (
            np.stack([copy.point_keys for copy in copies], axis=1)
            if dataset.n else np.empty((0, len(copies)), dtype=np.int64)
        )

    def digest(self) -> str:
        sha = hashlib.sha256(self.back_refs.tobytes())
        for copy in self.copies:
            copy.digest_into(sha)
        return sha.hexdigest()


def build_nnis_filter_index(dataset: Dataset, alpha: float, beta: float, eps: float = 0.1,
                            c_f: float = 3.0, seed: int = 0,
                            shape: Optional[FilterShape] = None) -> NnisFilterIndex:
    """Build L_f = ceil(C_f ln n) independent copies, each storing every point once."""
    if not -1.0 < beta < alpha < 1.0:
        raise ValidationError("Thresholds must satisfy -1 < beta < alpha < 1.")
    if c_f <= 0:
        raise ValidationError("C_F must be positive.")
    _check_unit_rows(dataset.points)
    copy_count = max(1, math.ceil(c_f * math.log(max(dataset.n, 1)) - 1e-9))
    shape = shape if shape is not None else choose_m(dataset.n, alpha, beta)
    rngs = spawn_rngs(seed, copy_count)
    copies = [build_filter_copy(dataset.points, shape, rng) for rng in rngs]
    logger.info(
        "Filter sampling index built",
        extra={
            'event_type': 'filter_build',
            'n': dataset.n,
            'copies': copy_count,
            'parts': shape.parts,
            'per_part': shape.per_part,
        }
    )
    return NnisFilterIndex(dataset, alpha, beta, eps, shape, copies)


def _marked(index: NnisFilterIndex, vector: np.ndarray) -> List[Tuple[int, int]]:
    return [
        (c, key)
        for c, copy in enumerate(index.copies)
        for key in marked_buckets(copy, vector, index.alpha, index.eps)
    ]


def filter_nnis_query(index: NnisFilterIndex, q: QueryLike, rng: np.random.Generator,
                      counters: Optional[QueryCounters] = None) -> SampleResult:
    """Uniform alpha-near point over the marked buckets of all copies, or None.

    Each round picks a marked bucket with probability proportional to its
    live size and a uniform live entry p. A near p is reported with
    probability 1/c_p, c_p being the number of marked buckets holding p.
    A p below beta is evicted for the rest of this query only.

    Raises:
        NotUnitNormError: If ``q`` is not unit length.
    """
    vector = _unit_query(q, index.dataset.dim)
    local = QueryCounters()
    marked = _marked(index, vector)
    local.buckets += len(marked)
    marked_set = set(marked)
    base = [index.copies[c].buckets[key] for c, key in marked]
    points = index.dataset.points

    candidates = np.unique(np.concatenate(base)) if base else np.empty(0, np.int64)
    local.inspected += sum(len(ids) for ids in base)
    if not np.any(points[candidates] @ vector >= index.alpha):
        if counters is not None:
            counters.add(local)
        return SampleResult(None, inspected=local.inspected)

    live_counts = np.array([len(ids) for ids in base], dtype=np.int64)
    cumulative = np.cumsum(live_counts)
    overlay: Dict[int, List[int]] = {}
    evicted: List[int] = []
    rounds = 0
    outcome = None
    while outcome is None:
        rounds += 1
        i = int(np.searchsorted(cumulative, rng.integers(cumulative[-1]), side="right"))
        live = overlay.get(i)
        position = int(rng.integers(live_counts[i]))
        point_id = int(live[position] if live is not None else base[i][position])
        local.inspected += 1
        similarity = float(points[point_id] @ vector)
        if similarity >= index.alpha:
            multiplicity = sum(
                (c, int(key)) in marked_set for c, key in enumerate(index.back_refs[point_id])
            )
            if rng.random() * multiplicity < 1.0:
                outcome = point_id
        elif similarity < index.beta:
            if live is None:
                live = overlay[i] = base[i].tolist()
            live[position] = live[-1]
            live.pop()
            live_counts[i] -= 1
            cumulative = np.cumsum(live_counts)
            evicted.append(point_id)

    if counters is not None:
        counters.add(local)
    if evicted:
        logger.debug(
            "Far points evicted during sampling",
            extra={'event_type': 'filter_eviction', 'evicted': evicted, 'rounds': rounds}
        )
    return SampleResult(outcome, inspected=local.inspected, rounds=rounds)
