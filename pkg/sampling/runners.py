# Third-party imports
import numpy as np
from sortedcontainers import SortedList

# Local imports
from .config import Config, SamplerKind
from .core import Dataset, QueryCounters, SampleResult, make_rng
from .models import ExperimentRun
from .oracle import (
    DistributionReport, IndependenceReport, NeighborhoodOracle, compare_distributions,
    consecutive_pair_independence, exact_ball, uniform_expectation,
)
from .planted import PlantedInstance
from .trials import build_structure, map_rebuild_trials, map_trials, sample, trial_seed

# Standard library imports
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import statistics
import time

# Logger for this module
logger = logging.getLogger(__name__)

Subject = Callable[[np.ndarray, np.random.Generator], Optional[int]]


@dataclass
class FairnessReport:
    sampler: str
    metric: str
    n: int
    ball_size: int
    trials: int
    distribution: DistributionReport
    independence: IndependenceReport
    passed: bool
    clamped_queries: int = 0
    mean_rounds: float = 0.0
    elapsed_seconds: float = 0.0
    frequencies: Dict[str, int] = field(default_factory=dict)

    def as_items(self) -> List[Tuple[str, object]]:
        """Stable key order for the key=value report."""
        distribution, independence = self.distribution, self.independence
        counts = [count for key, count in self.frequencies.items() if key != 'none']
        samples = distribution.n_samples
        return [
            ('sampler', self.sampler),
            ('metric', self.metric),
            ('n', self.n),
            ('ball_size', self.ball_size),
            ('trials', self.trials),
            ('samples', samples),
            ('bottom_count', distribution.bottom_count),
            ('bottom_rate', round(distribution.bottom_rate, 6)),
            ('unexpected_count', distribution.unexpected_count),
            ('freq_min', round(min(counts) / samples, 6) if counts and samples else 0.0),
            ('freq_max', round(max(counts) / samples, 6) if counts and samples else 0.0),
            ('tvd', round(distribution.tvd, 6)),
            ('chi2_stat', round(distribution.chi2_stat, 6)),
            ('chi2_dof', distribution.dof),
            ('chi2_pvalue', round(distribution.chi2_pvalue, 6)),
            ('indep_stat', round(independence.chi2_stat, 6)),
            ('indep_dof', independence.dof),
            ('indep_pvalue', round(independence.chi2_pvalue, 6)),
            ('indep_pairs', independence.pairs),
            ('clamped_queries', self.clamped_queries),
            ('mean_rounds', round(self.mean_rounds, 3)),
            ('elapsed_seconds', round(self.elapsed_seconds, 3)),
            ('passed', str(self.passed).lower()),
        ]

    def to_dict(self) -> dict:
        data = asdict(self)
        data['distribution']['chi2_stat'] = _finite(self.distribution.chi2_stat)
        return data


def _finite(value: float) -> Optional[float]:
    return value if np.isfinite(value) else None


def run_fairness_test(config: Config, instance: PlantedInstance,
                      subject: Optional[Subject] = None) -> FairnessReport:
    """Run ``config.trials`` trials against the instance query and score the outcomes.

    Static samplers are rebuilt for every trial from ``trial_seed(seed, i)``,
    in a process pool when ``config.workers`` exceeds one. The others are
    built once and queried repeatedly from a thread pool, each query drawing
    from its own trial-seeded generator. A ``subject`` callable replaces the
    configured sampler entirely.

    Args:
        config (Config): Sampler, metric, seed, trial and worker counts.
        instance (PlantedInstance): Dataset, metric and query to test.
        subject (Subject, optional): Callable ``(q, rng) -> id or None``
            scored instead of the configured sampler.

    Returns:
        FairnessReport: Distribution and independence statistics and the
        pass verdict.
    """
    started = time.perf_counter()
    dataset, q = instance.dataset, instance.query
    ball = exact_ball(NeighborhoodOracle(dataset, instance.metric), q)
    expected = uniform_expectation(ball)
    workers = config.workers

    if subject is not None:
        def worker(i: int) -> SampleResult:
            return SampleResult(subject(q, make_rng(trial_seed(config.seed, i))))

        results = map_trials(worker, config.trials, workers)
    elif config.sampler.rebuilds_per_trial:
        results = map_rebuild_trials(config, dataset, q, config.trials, workers)
    else:
        structure = build_structure(config, dataset)
        if config.sampler is SamplerKind.NNS_RANK_SWAP:
            workers = 1

        def worker(i: int) -> SampleResult:
            return sample(config, structure, q, make_rng(trial_seed(config.seed, i)))

        results = map_trials(worker, config.trials, workers)
    outputs = [result.outcome for result in results]
    tally = Counter(outputs)
    distribution = compare_distributions(tally, expected) if expected else _empty_ball_report(tally)
    independence = consecutive_pair_independence(outputs)
    significance = config.constants.significance
    if expected:
        passed = (
            distribution.tvd <= config.constants.tvd_tolerance
            and distribution.chi2_pvalue > significance
            and independence.chi2_pvalue > significance
            and distribution.unexpected_count == 0
        )
    else:
        passed = distribution.bottom_count == distribution.n_samples
    report = FairnessReport(
        sampler=config.sampler.value if subject is None else 'subject',
        metric=config.metric.kind.value,
        n=dataset.n,
        ball_size=int(ball.size),
        trials=config.trials,
        distribution=distribution,
        independence=independence,
        passed=bool(passed),
        clamped_queries=sum(result.clamped for result in results),
        mean_rounds=statistics.fmean([result.rounds for result in results]) if results else 0.0,
        elapsed_seconds=time.perf_counter() - started,
        frequencies={('none' if key is None else str(key)): count for key, count in sorted(
            tally.items(), key=lambda item: -1 if item[0] is None else item[0])},
    )
    logger.info(
        "Fairness run finished",
        extra={'event_type': 'fairness_run', 'sampler': report.sampler, 'trials': config.trials,
               'tvd': report.distribution.tvd, 'passed': report.passed}
    )
    return report


def _empty_ball_report(tally: Counter) -> DistributionReport:
    total = int(sum(tally.values()))
    bottom = int(tally.get(None, 0))
    return DistributionReport(
        tvd=(total - bottom) / total if total else 0.0, chi2_stat=0.0, chi2_pvalue=1.0, dof=0,
        n_samples=total, bottom_count=bottom, unexpected_count=total - bottom, cells=0,
    )


def estimate_memory(structure: Any) -> int:
    """Approximate bytes held by a structure, excluding the dataset it indexes."""
    seen = set()
    pending = [structure]
    total = 0
    while pending:
        item = pending.pop()
        if id(item) in seen or isinstance(item, (Dataset, np.random.Generator)):
            continue
        seen.add(id(item))
        if isinstance(item, np.ndarray):
            total += item.nbytes
        elif isinstance(item, SortedList):
            total += 8 * len(item)
        elif isinstance(item, dict):
            total += 8 * len(item)
            pending.extend(item.values())
        elif isinstance(item, (list, tuple)):
            pending.extend(item)
        elif hasattr(item, '__dict__'):
            pending.extend(vars(item).values())
    return total


@dataclass
class BenchReport:
    sampler: str
    metric: str
    n: int
    queries: int
    build_seconds: float
    mean_query_ms: float
    median_query_ms: float
    mean_inspected: float
    total_inspected: int
    buckets_touched: int
    sketch_merges: int
    memory_bytes: int
    bottom_count: int

    def as_items(self) -> List[Tuple[str, object]]:
        items = asdict(self)
        for key in ('build_seconds', 'mean_query_ms', 'median_query_ms', 'mean_inspected'):
            items[key] = round(items[key], 6)
        return list(items.items())

    def to_dict(self) -> dict:
        return asdict(self)


def run_bench(config: Config, instance: PlantedInstance,
              workload: Optional[Sequence[np.ndarray]] = None) -> BenchReport:
    """Build once, then time ``config.queries`` queries (or the given workload).

    Counters are exact and, for fixed seeds, identical across runs.
    """
    dataset = instance.dataset
    workload = list(workload) if workload is not None else [instance.query] * config.queries
    started = time.perf_counter()
    structure = build_structure(config, dataset)
    build_seconds = time.perf_counter() - started

    counters = QueryCounters()
    timings: List[float] = []
    bottom = 0
    for i, q in enumerate(workload):
        rng = make_rng(trial_seed(config.seed, i))
        started = time.perf_counter()
        result = sample(config, structure, q, rng, counters)
        timings.append((time.perf_counter() - started) * 1000.0)
        bottom += result.outcome is None
    queries = len(workload)
    report = BenchReport(
        sampler=config.sampler.value,
        metric=config.metric.kind.value,
        n=dataset.n,
        queries=queries,
        build_seconds=build_seconds,
        mean_query_ms=statistics.fmean(timings) if timings else 0.0,
        median_query_ms=statistics.median(timings) if timings else 0.0,
        mean_inspected=counters.inspected / queries if queries else 0.0,
        total_inspected=counters.inspected,
        buckets_touched=counters.buckets,
        sketch_merges=counters.sketch_merges,
        memory_bytes=estimate_memory(structure),
        bottom_count=bottom,
    )
    logger.info(
        "Benchmark finished",
        extra={'event_type': 'bench_run', 'sampler': report.sampler, 'queries': queries,
               'mean_inspected': report.mean_inspected}
    )
    return report


def persist_run(kind: str, config: Config, report: Any, passed: Optional[bool] = None):
    """Store a finished run as an ``ExperimentRun`` row."""
    return ExperimentRun.objects.create(
        kind=kind,
        sampler=config.sampler.value,
        seed=config.seed,
        trials=config.trials if kind == ExperimentRun.Kind.FAIRNESS else config.queries,
        passed=passed,
        report=report.to_dict(),
    )
