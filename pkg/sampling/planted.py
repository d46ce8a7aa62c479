"""Synthetic instances with a known number of near and c-near points around q."""

# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np

# Local imports
from .core import Dataset, Metric, MetricKind
from .exceptions import InfeasibleInstanceError
from .oracle import BallKind, NeighborhoodOracle, exact_ball

# Standard library imports
from dataclasses import dataclass
from typing import Optional
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
MAX_ATTEMPTS = 100
EXACT_MARGIN = 1e-9


@dataclass(frozen=True)
class PlantedSpec:
    """Size and neighborhood shape of a planted instance.

    ``near_similarity`` pins every near point of an inner-product instance
    to that similarity (plus a tiny margin) instead of drawing it.
    """

    metric: Metric
    n: int
    dim: int
    near: int
    cnear: int = 0
    near_similarity: Optional[float] = None

    def __post_init__(self):
        if self.n < 1 or self.dim < 1:
            raise ValidationError("A planted instance needs n >= 1 and d >= 1.")
        if self.near < 0 or self.cnear < 0:
            raise ValidationError("Planted counts must not be negative.")
        if self.near + self.cnear > self.n:
            raise ValidationError("near + cnear must not exceed n.")


@dataclass(frozen=True)
class PlantedInstance:
    dataset: Dataset
    query: np.ndarray
    near_ids: np.ndarray
    cnear_ids: np.ndarray
    seed: Optional[int]
    spec: PlantedSpec

    @property
    def metric(self) -> Metric:
        return self.spec.metric


def _flip(q: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    point = q.copy()
    positions = rng.choice(q.shape[0], size=count, replace=False)
    point[positions] = 1.0 - point[positions]
    return point


def _hamming_points(spec: PlantedSpec, rng: np.random.Generator):
    d = spec.dim
    radius = int(math.floor(spec.metric.r))
    far_radius = int(math.floor(spec.metric.r * spec.metric.c))
    if spec.cnear and far_radius <= radius:
        raise InfeasibleInstanceError(
            f"No integer distance lies in (r, cr] for r={spec.metric.r}, c={spec.metric.c}."
        )
    if radius > d or (spec.n > spec.near + spec.cnear and far_radius + 1 > d):
        raise InfeasibleInstanceError(f"Dimension {d} is too small for the requested radii.")
    q = rng.integers(0, 2, size=d).astype(np.float64)
    low = 1 if radius >= 1 else 0
    points = [_flip(q, int(rng.integers(low, radius + 1)), rng) for _ in range(spec.near)]
    points += [_flip(q, int(rng.integers(radius + 1, far_radius + 1)), rng) for _ in range(spec.cnear)]
    far = spec.n - spec.near - spec.cnear
    points += [_flip(q, int(rng.integers(far_radius + 1, d + 1)), rng) for _ in range(far)]
    return q, points


def _random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    direction = rng.standard_normal(dim)
    return direction / np.linalg.norm(direction)


def _euclidean_points(spec: PlantedSpec, rng: np.random.Generator):
    r, cr = spec.metric.r, spec.metric.r * spec.metric.c
    q = rng.standard_normal(spec.dim)
    radii = [r * rng.uniform(0.2, 0.95) for _ in range(spec.near)]
    radii += [r + (cr - r) * rng.uniform(0.05, 0.95) for _ in range(spec.cnear)]
    radii += [cr * rng.uniform(2.0, 4.0) for _ in range(spec.n - spec.near - spec.cnear)]
    return q, [q + radius * _random_direction(spec.dim, rng) for radius in radii]


def _at_similarity(q: np.ndarray, similarity: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector whose inner product with unit ``q`` is ``similarity``."""
    other = rng.standard_normal(q.shape[0])
    other -= (other @ q) * q
    other /= np.linalg.norm(other)
    point = similarity * q + math.sqrt(max(0.0, 1.0 - similarity * similarity)) * other
    return point / np.linalg.norm(point)


def _inner_product_points(spec: PlantedSpec, rng: np.random.Generator):
    if spec.dim < 2:
        raise InfeasibleInstanceError("Inner-product instances need d >= 2.")
    alpha, beta = spec.metric.alpha, spec.metric.beta
    q = _random_direction(spec.dim, rng)
    points = []
    for _ in range(spec.near):
        if spec.near_similarity is not None:
            similarity = min(1.0, spec.near_similarity + EXACT_MARGIN)
        else:
            similarity = alpha + (1.0 - alpha) * rng.uniform(0.05, 0.95)
        points.append(_at_similarity(q, similarity, rng))
    for _ in range(spec.cnear):
        points.append(_at_similarity(q, beta + (alpha - beta) * rng.uniform(0.05, 0.95), rng))
    for _ in range(spec.n - spec.near - spec.cnear):
        point = _random_direction(spec.dim, rng)
        if point @ q >= beta:
            point = _at_similarity(q, beta - (beta + 1.0) * rng.uniform(0.05, 0.95), rng)
        points.append(point)
    return q, points


GENERATORS = {
    MetricKind.HAMMING: _hamming_points,
    MetricKind.EUCLIDEAN: _euclidean_points,
    MetricKind.INNER_PRODUCT: _inner_product_points,
}


def generate_planted(spec: PlantedSpec, rng: np.random.Generator,
                     seed: Optional[int] = None) -> PlantedInstance:
    """Generate and validate an instance against the brute-force oracle.

    Ids are shuffled so planted points do not sit at the front.

    Args:
        spec (PlantedSpec): Metric, size and neighborhood counts.
        rng (np.random.Generator): Source of every coordinate.
        seed (int, optional): Recorded on the instance.

    Returns:
        PlantedInstance: Dataset, query and the planted near and c-near ids.

    Raises:
        InfeasibleInstanceError: If the planted parameters cannot be realized or
        validation still fails after ``MAX_ATTEMPTS`` generations.
    """
    if spec.near_similarity is not None and not spec.metric.alpha <= spec.near_similarity <= 1.0:
        raise InfeasibleInstanceError("near_similarity must lie in [alpha, 1].")
    for attempt in range(1, MAX_ATTEMPTS + 1):
        q, points = GENERATORS[spec.metric.kind](spec, rng)
        order = rng.permutation(spec.n)
        placed = np.empty((spec.n, spec.dim), dtype=np.float64)
        placed[order] = np.array(points)
        dataset = Dataset(placed, dim=spec.dim)
        near_ids = np.sort(order[:spec.near]).astype(np.int64)
        cnear_ids = np.sort(order[spec.near:spec.near + spec.cnear]).astype(np.int64)
        oracle = NeighborhoodOracle(dataset, spec.metric)
        ball = exact_ball(oracle, q)
        wide = exact_ball(oracle, q, BallKind.CNEAR_OR_NEAR)
        if np.array_equal(ball, near_ids) and np.array_equal(wide, np.union1d(near_ids, cnear_ids)):
            logger.info(
                "Planted instance generated",
                extra={'event_type': 'planted_instance', 'n': spec.n, 'near': spec.near,
                       'cnear': spec.cnear, 'attempts': attempt, 'metric': spec.metric.kind.value}
            )
            return PlantedInstance(dataset, q, near_ids, cnear_ids, seed, spec)
    raise InfeasibleInstanceError(
        f"Planted instance failed validation after {MAX_ATTEMPTS} attempts."
    )
