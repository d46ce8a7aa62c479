"""Mergeable distinct-count sketch keeping the t smallest hash values per list.

Every list w hashes ids with psi_w(x) = ((a_w * x + b_w) mod P) mod U where
P = 2^61 - 1 and U = max(n, 1024)^3. Two sketches can be merged only when
they share one ``SketchFamily``.
"""

# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np

# Local imports
from .exceptions import SketchMismatchError

# Standard library imports
from functools import reduce
from typing import Iterable, Optional, Sequence
import hashlib
import logging
import math

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
MERSENNE_PRIME = (1 << 61) - 1
MAX_IDS = 1 << 20
MIN_UNIVERSE_BASE = 1024
SENTINEL = np.iinfo(np.int64).max

_P = np.uint64(MERSENNE_PRIME)
_LOW_31 = np.uint64((1 << 31) - 1)


def _mulmod(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(a * x) mod P for a < P and x < 2^20, without leaving uint64."""
    a_hi = a >> np.uint64(31)
    a_lo = a & _LOW_31
    hi = a_hi * x
    # hi * 2^31 = (hi >> 30) * 2^61 + (hi mod 2^30) * 2^31, and 2^61 = 1 mod P
    folded = ((hi << np.uint64(31)) & _P) + (hi >> np.uint64(30))
    return (folded + a_lo * x) % _P


class SketchFamily:
    """Seeds and sizes shared by every sketch that may be merged together."""

    def __init__(self, lists: int, t: int, universe: int, a: np.ndarray, b: np.ndarray):
        self.lists = int(lists)
        self.t = int(t)
        self.universe = int(universe)
        self.a = np.asarray(a, dtype=np.uint64)
        self.b = np.asarray(b, dtype=np.uint64)

    @classmethod
    def create(cls, n: int, eps: float = 0.5, delta: float = 0.01, c_delta: float = 8.0,
               c_t: float = 4.0, rng: Optional[np.random.Generator] = None) -> "SketchFamily":
        """Draw Delta = ceil(C_delta ln(1/delta)) hash functions with t = ceil(C_t / eps^2).

        Raises:
            ValidationError: If eps or delta lie outside (0, 1), a constant is
            not positive, or n exceeds the supported id range.
        """
        if not 0 < eps < 1:
            raise ValidationError("Sketch eps must lie in (0, 1).")
        if not 0 < delta < 1:
            raise ValidationError("Sketch delta must lie in (0, 1).")
        if c_delta <= 0 or c_t <= 0:
            raise ValidationError("Sketch constants C_DELTA and C_T must be positive.")
        if n > MAX_IDS:
            raise ValidationError(f"Sketches support at most {MAX_IDS} distinct ids.")
        rng = rng if rng is not None else np.random.default_rng()
        lists = max(1, math.ceil(c_delta * math.log(1.0 / delta)))
        t = max(1, math.ceil(c_t / (eps * eps)))
        universe = max(n, MIN_UNIVERSE_BASE) ** 3
        a = rng.integers(1, MERSENNE_PRIME, size=lists, dtype=np.uint64)
        b = rng.integers(0, MERSENNE_PRIME, size=lists, dtype=np.uint64)
        return cls(lists, t, universe, a, b)

    @property
    def signature(self) -> tuple:
        return (self.lists, self.t, self.universe, self.a.tobytes(), self.b.tobytes())

    def hash(self, ids: Sequence[int]) -> np.ndarray:
        """Hash values of ``ids`` under every list's function, shape (lists, len(ids))."""
        x = np.asarray(ids, dtype=np.uint64).reshape(1, -1)
        values = (_mulmod(self.a[:, None], x) + self.b[:, None]) % _P
        return (values % np.uint64(self.universe)).astype(np.int64)

    def empty(self) -> "DistinctSketch":
        return DistinctSketch(self, np.full((self.lists, self.t), SENTINEL, dtype=np.int64))


class DistinctSketch:
    """Delta sorted lists, each holding at most t distinct hash values.

    Unused slots hold ``SENTINEL`` so every row stays sorted ascending.
    """

    def __init__(self, family: SketchFamily, values: np.ndarray):
        self.family = family
        self.values = values

    def sizes(self) -> np.ndarray:
        return np.count_nonzero(self.values != SENTINEL, axis=1)

    def copy(self) -> "DistinctSketch":
        return DistinctSketch(self.family, self.values.copy())

    def same_values(self, other: "DistinctSketch") -> bool:
        return np.array_equal(self.values, other.values)

    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()


def sketch_insert(sketch: DistinctSketch, point_id: int) -> DistinctSketch:
    """Insert ``point_id`` into every list; duplicates and large values are dropped."""
    hashed = sketch.family.hash([point_id])[:, 0]
    for w, value in enumerate(hashed):
        row = sketch.values[w]
        if value >= row[-1]:
            continue
        position = int(np.searchsorted(row, value))
        if row[position] == value:
            continue
        row[position + 1:] = row[position:-1].copy()
        row[position] = value
    return sketch


def sketch_from_ids(family: SketchFamily, ids: Iterable[int]) -> DistinctSketch:
    """Sketch of an id collection, value-identical to inserting the ids one by one."""
    unique = np.unique(np.fromiter(ids, dtype=np.int64))
    sketch = family.empty()
    if unique.size == 0:
        return sketch
    hashed = np.sort(family.hash(unique), axis=1)
    for w in range(family.lists):
        smallest = np.unique(hashed[w])[:family.t]
        sketch.values[w, :smallest.size] = smallest
    return sketch


def sketch_merge(first: DistinctSketch, second: DistinctSketch) -> DistinctSketch:
    """The t smallest distinct values of each pair of lists, as a new sketch.

    Raises:
        SketchMismatchError: If the sketches come from different families.
    """
    if first.family is not second.family and first.family.signature != second.family.signature:
        raise SketchMismatchError("Cannot merge sketches built from different hash families.")
    combined = np.sort(np.concatenate([first.values, second.values], axis=1), axis=1)
    combined[:, 1:][combined[:, 1:] == combined[:, :-1]] = SENTINEL
    combined.sort(axis=1)
    return DistinctSketch(first.family, np.ascontiguousarray(combined[:, :first.family.t]))


def merge_all(sketches: Iterable[DistinctSketch], family: SketchFamily) -> DistinctSketch:
    return reduce(sketch_merge, sketches, family.empty())


def sketch_estimate(sketch: DistinctSketch) -> int:
    """Estimated number of distinct ids.

    Exact while any list is under-full; otherwise the rounded median of
    t * U / v_w over the lists, v_w being the t-th smallest value of list w.
    """
    family = sketch.family
    sizes = sketch.sizes()
    if int(sizes.min()) < family.t:
        return int(sizes.max())
    tth = np.maximum(sketch.values[:, family.t - 1], 1).astype(np.float64)
    return int(round(float(np.median(family.t * float(family.universe) / tth))))
