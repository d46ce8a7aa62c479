# Django imports
from django.core.exceptions import ValidationError

# Third-party imports
import numpy as np
from scipy.special import gammaincc
from scipy.stats import chi2_contingency

# Local imports
from .core import Dataset, Metric, QueryLike, as_vector

# Standard library imports
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence
import logging

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
MIN_EXPECTED_COUNT = 5.0


class BallKind(str, Enum):
    NEAR = "near"
    CNEAR_OR_NEAR = "cnear_or_near"


@dataclass(frozen=True)
class NeighborhoodOracle:
    """Linear-scan ground truth for one dataset and metric."""

    dataset: Dataset
    metric: Metric


def exact_ball(oracle: NeighborhoodOracle, q: QueryLike,
               kind: BallKind = BallKind.NEAR) -> np.ndarray:
    """Sorted ids within r (or within cr / at least beta for ``CNEAR_OR_NEAR``)."""
    vector = as_vector(q, oracle.dataset.dim)
    values = oracle.metric.values(oracle.dataset.points, vector)
    if BallKind(kind) is BallKind.NEAR:
        mask = oracle.metric.near_mask(values)
    else:
        mask = ~oracle.metric.far_mask(values)
    return np.flatnonzero(mask).astype(np.int64)


def exact_uniform_sample(oracle: NeighborhoodOracle, q: QueryLike,
                         rng: np.random.Generator) -> Optional[int]:
    ball = exact_ball(oracle, q)
    if ball.size == 0:
        return None
    return int(ball[rng.integers(ball.size)])


def uniform_expectation(ids: Iterable[int]) -> Dict[int, float]:
    """Uniform probabilities over ``ids``.

    Args:
        ids (Iterable[int]): The support, usually an exact near ball.

    Returns:
        Dict[int, float]: ``1 / len(ids)`` per id; empty for an empty support.
    """
    ids = [int(i) for i in ids]
    return {i: 1.0 / len(ids) for i in ids} if ids else {}


@dataclass(frozen=True)
class DistributionReport:
    """Distance between observed outcome counts and an expected distribution.

    ``tvd`` counts the mass on None and on unexpected ids as pure error;
    the chi-square statistic is computed over the in-support samples only.
    """

    tvd: float
    chi2_stat: float
    chi2_pvalue: float
    dof: int
    n_samples: int
    bottom_count: int
    unexpected_count: int
    cells: int

    @property
    def bottom_rate(self) -> float:
        return self.bottom_count / self.n_samples if self.n_samples else 0.0


def _merge_small_cells(expected: np.ndarray, observed: np.ndarray):
    order = np.argsort(expected, kind="stable")
    groups_e: List[float] = []
    groups_o: List[float] = []
    acc_e = acc_o = 0.0
    for i in order:
        acc_e += expected[i]
        acc_o += observed[i]
        if acc_e >= MIN_EXPECTED_COUNT:
            groups_e.append(acc_e)
            groups_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if groups_e:
            groups_e[-1] += acc_e
            groups_o[-1] += acc_o
        else:
            groups_e.append(acc_e)
            groups_o.append(acc_o)
    return np.array(groups_e), np.array(groups_o)


def compare_distributions(observed: Mapping[Optional[int], int],
                          expected: Mapping[int, float]) -> DistributionReport:
    """TVD and Pearson chi-square of ``observed`` counts against ``expected`` probabilities.

    Cells with an expected count below 5 are merged before the chi-square;
    the p-value is the regularized upper incomplete gamma Q(dof/2, stat/2).

    Args:
        observed (Mapping[int | None, int]): Outcome counts; the None key
            counts answers that found no point.
        expected (Mapping[int, float]): Probability of every supported id.

    Returns:
        DistributionReport: TVD over the support, chi-square statistic,
        degrees of freedom and p-value, plus bottom and unexpected counts.

    Raises:
        ValidationError: If ``expected`` has no support or no positive mass.
    """
    if not expected:
        raise ValidationError("The expected distribution has empty support.")
    support = sorted(expected)
    probabilities = np.array([float(expected[i]) for i in support])
    if probabilities.sum() <= 0 or np.any(probabilities < 0):
        raise ValidationError("Expected probabilities must be non-negative with positive mass.")
    probabilities = probabilities / probabilities.sum()

    total = int(sum(observed.values()))
    bottom = int(observed.get(None, 0))
    counts = np.array([float(observed.get(i, 0)) for i in support])
    unexpected = total - bottom - int(counts.sum())

    if total == 0:
        return DistributionReport(1.0, 0.0, 1.0, 0, 0, 0, 0, len(support))
    tvd = 0.5 * (np.abs(counts / total - probabilities).sum() + (bottom + unexpected) / total)

    in_support = counts.sum()
    stat, pvalue, dof = 0.0, 1.0, 0
    if unexpected:
        stat, pvalue, dof = float("inf"), 0.0, max(len(support) - 1, 0)
    elif in_support > 0 and len(support) > 1:
        expected_counts, observed_counts = _merge_small_cells(probabilities * in_support, counts)
        dof = len(expected_counts) - 1
        if dof >= 1:
            stat = float(((observed_counts - expected_counts) ** 2 / expected_counts).sum())
            pvalue = float(gammaincc(dof / 2.0, stat / 2.0))
    return DistributionReport(
        tvd=float(tvd), chi2_stat=stat, chi2_pvalue=pvalue, dof=dof, n_samples=total,
        bottom_count=bottom, unexpected_count=unexpected, cells=len(support),
    )


@dataclass(frozen=True)
class IndependenceReport:
    """Chi-square independence test over consecutive output pairs."""

    chi2_stat: float
    chi2_pvalue: float
    dof: int
    pairs: int


def consecutive_pair_independence(outputs: Sequence[Optional[int]]) -> IndependenceReport:
    """Test whether each output is independent of the one before it (None pairs dropped).

    Args:
        outputs (Sequence[int | None]): Sampler answers in query order.

    Returns:
        IndependenceReport: Pearson statistic, degrees of freedom, p-value
        and the number of pairs used.
    """
    pairs = Counter(
        (a, b) for a, b in zip(outputs, outputs[1:]) if a is not None and b is not None
    )
    firsts = sorted({a for a, _ in pairs})
    seconds = sorted({b for _, b in pairs})
    pair_count = int(sum(pairs.values()))
    if len(firsts) < 2 or len(seconds) < 2:
        return IndependenceReport(0.0, 1.0, 0, pair_count)
    row = {a: i for i, a in enumerate(firsts)}
    col = {b: j for j, b in enumerate(seconds)}
    table = np.zeros((len(firsts), len(seconds)))
    for (a, b), count in pairs.items():
        table[row[a], col[b]] = count
    result = chi2_contingency(table, correction=False)
    return IndependenceReport(
        chi2_stat=float(result.statistic), chi2_pvalue=float(result.pvalue),
        dof=int(result.dof), pairs=pair_count,
    )
