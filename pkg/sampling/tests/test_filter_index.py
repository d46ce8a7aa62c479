"""
Unit tests for tensored filters: closed forms, the beta-query and filter sampling
"""

import math
from collections import Counter
from decimal import Decimal
from fractions import Fraction
from unittest.mock import patch

import numpy as np
from django.core.exceptions import ValidationError
from django.test import TestCase

from sampling.core import Dataset, Metric, QueryCounters, make_rng
from sampling.exceptions import NotUnitNormError
from sampling.filter_index import (
    FilterCopy, FilterParams, NnisFilterIndex, build_filter_copy, build_nnis_filter_index,
    choose_m, f_threshold, filter_build, filter_nnis_query, filter_query, filter_repetitions,
    marked_buckets, rho_exponent, shape_for, threshold_sets,
)
from sampling.oracle import (
    compare_distributions, consecutive_pair_independence, uniform_expectation,
)
from sampling.planted import PlantedSpec, generate_planted
from sampling.tests.factories import planted_inner_product, random_unit_rows


class ClosedFormTest(TestCase):
    """Test cases for f, rho and the filter shape"""

    def test_f_threshold_reference(self):
        """Test f(0.5, 0.1) against high-precision arithmetic"""
        alpha, eps = Decimal('0.5'), Decimal('0.1')
        expected = (2 * (1 - alpha * alpha) * (1 / eps).ln()).sqrt()
        self.assertAlmostEqual(f_threshold(0.5, 0.1), float(expected), delta=1e-12)
        self.assertAlmostEqual(f_threshold(0.5, 0.1), 1.858461, places=5)

    def test_f_threshold_limits(self):
        """Test f vanishes at alpha = 1 and at eps = 1"""
        self.assertEqual(f_threshold(1.0, 0.1), 0.0)
        self.assertEqual(f_threshold(0.3, 1.0), 0.0)

    def test_f_threshold_domain(self):
        """Test alpha > 1 and eps <= 0 are rejected"""
        with self.assertRaises(ValidationError):
            f_threshold(1.5, 0.1)
        with self.assertRaises(ValidationError):
            f_threshold(0.5, 0.0)

    def test_rho_reference(self):
        """Test rho(0.8, 0.2) against exact rational arithmetic"""
        alpha, beta = Fraction('0.8'), Fraction('0.2')
        expected = (1 - alpha ** 2) * (1 - beta ** 2) / (1 - alpha * beta) ** 2
        self.assertAlmostEqual(rho_exponent(0.8, 0.2), float(expected), delta=1e-12)
        self.assertAlmostEqual(rho_exponent(0.8, 0.2), 0.489796, places=5)

    def test_rho_limits(self):
        """Test rho = 1 at beta = alpha and 1 - alpha^2 at beta = 0"""
        self.assertAlmostEqual(rho_exponent(0.6, 0.6), 1.0, delta=1e-12)
        self.assertAlmostEqual(rho_exponent(0.6, 0.0), 1 - 0.36, delta=1e-12)

    def test_rho_ordering(self):
        """Test beta > alpha is rejected"""
        with self.assertRaises(ValidationError):
            rho_exponent(0.3, 0.5)

    def test_choose_m_small_n(self):
        """Test n = 1 gives a single filter"""
        shape = choose_m(1, 0.8, 0.2)
        self.assertEqual((shape.m, shape.per_part, shape.effective_m), (1, 1, 1))

    def test_choose_m_beta_zero(self):
        """Test beta = 0 makes m = n, rounded up to a perfect power"""
        shape = choose_m(1000, 0.5, 0.0)
        self.assertEqual(shape.parts, 2)
        self.assertEqual(shape.m, 1000)
        self.assertEqual(shape.per_part, 32)
        self.assertEqual(shape.effective_m, 1024)

    def test_choose_m_reference(self):
        """Test m for n = 10^4, alpha = 0.8, beta = 0.2"""
        exponent = (1 - Decimal('0.2') ** 2) / (1 - Decimal('0.8') * Decimal('0.2')) ** 2
        expected = int((Decimal(10000) ** exponent).to_integral_value(rounding='ROUND_CEILING'))
        shape = choose_m(10000, 0.8, 0.2)
        self.assertEqual(shape.parts, 3)
        self.assertEqual(shape.m, expected)
        self.assertGreaterEqual(shape.per_part ** 3, expected)
        self.assertLess((shape.per_part - 1) ** 3, expected)

    def test_repetitions(self):
        """Test R = ceil(ln(1/delta) p^(-1/(1 - alpha^2)))"""
        expected = math.ceil(math.log(20) * 0.9 ** (-1 / (1 - 0.49)))
        self.assertEqual(filter_repetitions(0.9, 0.05, 0.7), expected)


class FilterCopyTest(TestCase):
    """Test cases for building one filter copy"""

    def test_single_part_uses_argmax(self):
        """Test t = 1 keys are the argmax filter index"""
        points = random_unit_rows(50, 8, seed=1)
        copy = build_filter_copy(points, shape_for(1, 16), make_rng(2))
        np.testing.assert_array_equal(copy.point_keys, np.argmax(points @ copy.vectors[0].T, axis=1))

    def test_every_point_stored_once(self):
        """Test bucket sizes sum to n"""
        points = random_unit_rows(80, 8, seed=3)
        copy = build_filter_copy(points, shape_for(2, 5), make_rng(4))
        self.assertEqual(sum(len(ids) for ids in copy.buckets.values()), 80)

    def test_identical_points_share_bucket(self):
        """Test duplicates share a key"""
        points = np.repeat(random_unit_rows(1, 8, seed=5), 3, axis=0)
        copy = build_filter_copy(points, shape_for(3, 4), make_rng(6))
        self.assertEqual(len(copy.buckets), 1)

    def test_larger_slack_marks_more(self):
        """Test smaller eps widens every threshold set"""
        copy = build_filter_copy(random_unit_rows(10, 8, seed=7), shape_for(2, 32), make_rng(8))
        q = random_unit_rows(1, 8, seed=9)[0]
        narrow = threshold_sets(copy, q, 0.6, 0.5)
        wide = threshold_sets(copy, q, 0.6, 0.01)
        for small, large in zip(narrow, wide):
            self.assertTrue(set(small.tolist()) <= set(large.tolist()))

    def test_marked_buckets_enumeration_paths_agree(self):
        """Test product enumeration and key filtering mark the same buckets"""
        points = random_unit_rows(300, 8, seed=10)
        rng = make_rng(11)
        for _ in range(20):
            copy = build_filter_copy(points, shape_for(2, 12), rng)
            q = random_unit_rows(1, 8, seed=int(rng.integers(1 << 30)))[0]
            sets = threshold_sets(copy, q, 0.7, 0.1)
            expected = sorted(
                key for key in copy.buckets
                if all(digit in allowed for digit, allowed in zip(divmod(key, 12), sets))
            )
            self.assertEqual(marked_buckets(copy, q, 0.7, 0.1), expected)

    def test_threshold_set_grows_sublinearly(self):
        """Test mean |I| rises with m' with a log-log slope below 1"""
        dim = 16
        sizes = []
        widths = [2 ** 6, 2 ** 8, 2 ** 10, 2 ** 12]
        queries = random_unit_rows(30, dim, seed=12)
        for width in widths:
            copy = build_filter_copy(np.empty((0, dim)), shape_for(1, width), make_rng(width))
            sizes.append(np.mean([len(threshold_sets(copy, q, 0.8, 0.1)[0]) for q in queries]))
        self.assertTrue(all(a < b for a, b in zip(sizes, sizes[1:])))
        slope = np.polyfit(np.log(widths), np.log(sizes), 1)[0]
        self.assertLess(slope, 1.0)


class FilterQueryTest(TestCase):
    """Test cases for the beta-similar point query"""

    def test_non_unit_points_rejected(self):
        """Test building over non-unit vectors raises"""
        dataset = Dataset([[1.0, 1.0], [0.0, 1.0]])
        with self.assertRaises(NotUnitNormError):
            filter_build(dataset, FilterParams(0.7, 0.3), make_rng(0))

    def test_non_unit_query_rejected(self):
        """Test querying with a non-unit vector raises"""
        dataset = Dataset(random_unit_rows(20, 8))
        index = filter_build(dataset, FilterParams(0.7, 0.3), make_rng(0))
        with self.assertRaises(NotUnitNormError):
            filter_query(index, np.ones(8))

    def test_empty_dataset(self):
        """Test an empty dataset answers None"""
        index = filter_build(Dataset([], dim=8), FilterParams(0.7, 0.3), make_rng(0))
        self.assertIsNone(filter_query(index, random_unit_rows(1, 8)[0]))

    def test_query_on_data_point(self):
        """Test a query equal to a data point finds a beta-similar point"""
        dataset = Dataset(random_unit_rows(200, 16, seed=1))
        index = filter_build(dataset, FilterParams(0.7, 0.3, repetitions=2), make_rng(2))
        counters = QueryCounters()
        point_id = filter_query(index, dataset.points[17], counters)
        self.assertIsNotNone(point_id)
        self.assertGreaterEqual(dataset.points[point_id] @ dataset.points[17], 0.3)
        self.assertGreater(counters.buckets, 0)

    def test_success_rate(self):
        """Test a planted alpha-similar pair is answered in at least 95% of trials"""
        metric = Metric.inner_product(0.7, 0.3)
        spec = PlantedSpec(metric=metric, n=300, dim=32, near=1, near_similarity=0.7)
        repetitions = filter_repetitions(0.9, 0.05, 0.7)
        rng = make_rng(3)
        found = 0
        for trial in range(60):
            instance = generate_planted(spec, rng, seed=trial)
            index = filter_build(instance.dataset, FilterParams(0.7, 0.3, 0.1, repetitions), rng)
            point_id = filter_query(index, instance.query)
            if point_id is not None:
                self.assertGreaterEqual(instance.dataset.points[point_id] @ instance.query, 0.3)
                found += 1
        self.assertGreaterEqual(found / 60, 0.95)

    @patch('sampling.filter_index.logger')
    def test_build_is_logged(self, mock_logger):
        """Test the build logs a filter_build event"""
        filter_build(Dataset(random_unit_rows(20, 8)), FilterParams(0.7, 0.3), make_rng(0))
        self.assertEqual(mock_logger.info.call_args.kwargs['extra']['event_type'], 'filter_build')


class FilterNnisQueryTest(TestCase):
    """Test cases for uniform sampling over the marked filter buckets"""

    def setUp(self):
        """Set up a planted unit-vector instance with 8 near points"""
        self.instance = planted_inner_product(seed=51, n=200, near=8)
        self.index = build_nnis_filter_index(self.instance.dataset, 0.8, 0.4, seed=5)

    def test_back_references(self):
        """Test every point knows its bucket in every copy"""
        self.assertEqual(self.index.back_refs.shape, (200, len(self.index.copies)))
        for c, copy in enumerate(self.index.copies):
            for point_id in (0, 99, 199):
                self.assertIn(point_id, copy.buckets[int(self.index.back_refs[point_id, c])])

    def test_single_near_point(self):
        """Test the only near point is always returned"""
        points = random_unit_rows(60, 16, seed=6)
        target = points[0]
        points[1:] = [p if p @ target < 0.4 else -p for p in points[1:]]
        index = build_nnis_filter_index(Dataset(points), 0.8, 0.4, seed=1)
        rng = make_rng(0)
        outcomes = {filter_nnis_query(index, target, rng).outcome for _ in range(50)}
        self.assertEqual(outcomes, {0})

    def test_no_near_point(self):
        """Test None when nothing reaches alpha"""
        spec = PlantedSpec(metric=Metric.inner_product(0.8, 0.4), n=100, dim=32, near=0)
        instance = generate_planted(spec, make_rng(7))
        index = build_nnis_filter_index(instance.dataset, 0.8, 0.4)
        self.assertIsNone(filter_nnis_query(index, instance.query, make_rng(0)).outcome)

    def test_queries_do_not_change_state(self):
        """Test evictions never touch the shared buckets"""
        digest = self.index.digest()
        rng = make_rng(8)
        for _ in range(30):
            filter_nnis_query(self.index, self.instance.query, rng)
        self.assertEqual(self.index.digest(), digest)

    def test_uniform_over_near_points(self):
        """Test 2000 queries are uniform within 0.04 over the 8 near points"""
        rng = make_rng(9)
        queries = 2000
        outputs = [filter_nnis_query(self.index, self.instance.query, rng).outcome for _ in range(queries)]
        counts = Counter(outputs)
        self.assertEqual(set(counts), set(self.instance.near_ids.tolist()))
        for point_id in self.instance.near_ids:
            self.assertAlmostEqual(counts[int(point_id)] / queries, 1 / 8, delta=0.04)
        report = compare_distributions(counts, uniform_expectation(self.instance.near_ids))
        self.assertGreater(report.chi2_pvalue, 0.001)
        self.assertGreater(consecutive_pair_independence(outputs).chi2_pvalue, 0.001)

    @patch('sampling.filter_index.logger')
    def test_only_far_points_evicted(self, mock_logger):
        """Test every evicted point is below beta"""
        rng = make_rng(10)
        for _ in range(50):
            filter_nnis_query(self.index, self.instance.query, rng)
        points = self.instance.dataset.points
        for call in mock_logger.debug.call_args_list:
            extra = call.kwargs['extra']
            self.assertEqual(extra['event_type'], 'filter_eviction')
            for point_id in extra['evicted']:
                self.assertLess(points[point_id] @ self.instance.query, 0.4)

    def test_non_unit_query_rejected(self):
        """Test querying with a non-unit vector raises"""
        with self.assertRaises(NotUnitNormError):
            filter_nnis_query(self.index, 2 * self.instance.query, make_rng(0))


def fixed_copy(points, vectors):
    """A one-part filter copy over the given filter vectors"""
    vectors = np.asarray(vectors, dtype=np.float64)
    keys = np.argmax(points @ vectors.T, axis=1).astype(np.int64)
    buckets = {int(key): np.flatnonzero(keys == key) for key in np.unique(keys)}
    return FilterCopy(vectors[None], buckets, keys)


class MultiplicityCorrectionTest(TestCase):
    """Test cases for reporting points held by several marked buckets"""

    def setUp(self):
        """Set up two near points marked twice and once, a middle point and a far point"""
        spread = math.sqrt(0.19)
        points = np.array([
            [0.9, spread],
            [0.9, -spread],
            [0.5, math.sqrt(0.75)],
            [0.1, math.sqrt(0.99)],
            [-1.0, 0.0],
        ])
        self.query = np.array([1.0, 0.0])
        copies = [
            fixed_copy(points, [[1.0, 0.0], [-1.0, 0.0]]),
            fixed_copy(points, [[10.0, 10.0], [5.0, -10.0]]),
        ]
        self.index = NnisFilterIndex(Dataset(points), 0.8, 0.3, 0.1, shape_for(1, 2), copies)

    def test_layout(self):
        """Test point 0 sits in both marked buckets and point 1 in one"""
        for copy in self.index.copies:
            self.assertEqual(marked_buckets(copy, self.query, 0.8, 0.1), [0])
        self.assertEqual(self.index.copies[0].buckets[0].tolist(), [0, 1, 2, 3])
        self.assertEqual(self.index.copies[1].buckets[0].tolist(), [0, 2, 3])

    def test_doubly_marked_point_is_not_favored(self):
        """Test both near points are reported equally often despite different multiplicities"""
        digest = self.index.digest()
        rng = make_rng(12)
        queries = 8000
        outputs = [filter_nnis_query(self.index, self.query, rng).outcome for _ in range(queries)]
        counts = Counter(outputs)
        self.assertEqual(set(counts), {0, 1})
        doubled, single = counts[0] / queries, counts[1] / queries
        self.assertAlmostEqual(doubled, 0.5, delta=0.04)
        self.assertAlmostEqual(single, 0.5, delta=0.04)
        self.assertLessEqual(abs(doubled - single), 0.1 * max(doubled, single))
        self.assertGreater(compare_distributions(counts, uniform_expectation([0, 1])).chi2_pvalue, 0.001)
        self.assertGreater(consecutive_pair_independence(outputs).chi2_pvalue, 0.001)
        self.assertEqual(self.index.digest(), digest)
