"""
Unit tests for per-trial building, sampling and the rebuild pool
"""

from unittest.mock import patch

import numpy as np
from django.test import TestCase

from sampling.config import Config, Constants, SamplerKind
from sampling.core import Metric, QueryCounters, make_rng
from sampling.fair_sampler import NnsSampler
from sampling.filter_index import FilterIndex, NnisFilterIndex
from sampling.nnis import SegmentSampler
from sampling.oracle import NeighborhoodOracle
from sampling.runners import run_fairness_test
from sampling.tests.factories import planted, planted_inner_product
from sampling.trials import (
    build_structure, map_rebuild_trials, rebuild_trial, sample, trial_seed,
)


HAMMING = Metric.hamming(4, 4)
INNER = Metric.inner_product(0.8, 0.4)


class TrialSeedTest(TestCase):
    """Test cases for per-trial seeds"""

    def test_stable_and_distinct(self):
        """Test seeds depend only on (seed, index)"""
        self.assertEqual(trial_seed(3, 5), trial_seed(3, 5))
        self.assertEqual(len({trial_seed(3, i) for i in range(100)}), 100)
        self.assertNotEqual(trial_seed(3, 0), trial_seed(4, 0))


class BuildAndSampleTest(TestCase):
    """Test cases for dispatching on the sampler kind"""

    def setUp(self):
        """Set up one Hamming and one unit-vector instance"""
        self.hamming = planted(seed=61, n=100, near=4)
        self.inner = planted_inner_product(seed=62, n=100, near=4)

    def test_structure_types(self):
        """Test each kind builds its own structure"""
        expected = {
            SamplerKind.NNS: NnsSampler,
            SamplerKind.NNS_NAIVE: NnsSampler,
            SamplerKind.NNS_RANK_SWAP: NnsSampler,
            SamplerKind.NNIS: SegmentSampler,
            SamplerKind.ORACLE: NeighborhoodOracle,
        }
        for kind, cls in expected.items():
            structure = build_structure(Config(kind, HAMMING), self.hamming.dataset)
            self.assertIsInstance(structure, cls)
        self.assertIsInstance(build_structure(Config('filter', INNER), self.inner.dataset), FilterIndex)
        self.assertIsInstance(
            build_structure(Config('filter_nnis', INNER), self.inner.dataset), NnisFilterIndex
        )

    def test_every_sampler_answers_near(self):
        """Test every kind answers with a near point or None"""
        for kind in (SamplerKind.NNS, SamplerKind.NNS_NAIVE, SamplerKind.NNS_RANK_SWAP,
                     SamplerKind.NNIS, SamplerKind.ORACLE):
            config = Config(kind, HAMMING)
            structure = build_structure(config, self.hamming.dataset)
            counters = QueryCounters()
            result = sample(config, structure, self.hamming.query, make_rng(0), counters)
            self.assertIn(result.outcome, self.hamming.near_ids)
        config = Config('filter_nnis', INNER)
        structure = build_structure(config, self.inner.dataset)
        result = sample(config, structure, self.inner.query, make_rng(0))
        self.assertIn(result.outcome, self.inner.near_ids)

    def test_filter_answers_beta_point(self):
        """Test the filter kind answers with a beta-similar point"""
        config = Config('filter', INNER)
        structure = build_structure(config, self.inner.dataset)
        outcome = sample(config, structure, self.inner.query, make_rng(0)).outcome
        self.assertIsNotNone(outcome)
        self.assertGreaterEqual(self.inner.dataset.points[outcome] @ self.inner.query, 0.4)

    def test_constants_reach_the_structure(self):
        """Test constants flow into the built structure"""
        config = Config('nnis', HAMMING, constants=Constants(c_lambda=1.0, c_sigma=2.0))
        structure = build_structure(config, self.hamming.dataset)
        self.assertEqual(structure.lam, int(np.ceil(np.log(100))))


class RebuildPoolTest(TestCase):
    """Test cases for running rebuild trials in worker processes"""

    def setUp(self):
        """Set up a small Hamming instance"""
        self.instance = planted(seed=72, n=60, near=3)
        self.config = Config('nns', HAMMING, seed=9)

    def test_processes_match_serial(self):
        """Test the process pool returns every trial result in trial order"""
        dataset, q = self.instance.dataset, self.instance.query
        serial = map_rebuild_trials(self.config, dataset, q, 40, workers=1)
        pooled = map_rebuild_trials(self.config, dataset, q, 40, workers=3)
        self.assertEqual([r.outcome for r in serial], [r.outcome for r in pooled])
        self.assertEqual([r.inspected for r in serial], [r.inspected for r in pooled])

    def test_trial_matches_direct_build(self):
        """Test one rebuild trial equals building and querying from the trial seed"""
        dataset, q = self.instance.dataset, self.instance.query
        seed = trial_seed(self.config.seed, 7)
        structure = build_structure(self.config, dataset, seed)
        expected = sample(self.config, structure, q, make_rng(seed))
        self.assertEqual(rebuild_trial(self.config, dataset, q, 7).outcome, expected.outcome)

    @patch('sampling.trials.ProcessPoolExecutor')
    def test_single_worker_stays_in_process(self, mock_pool):
        """Test one worker never starts a process pool"""
        map_rebuild_trials(self.config, self.instance.dataset, self.instance.query, 5, workers=1)
        mock_pool.assert_not_called()

    def test_fairness_uses_processes_for_rebuilds(self):
        """Test rebuild samplers go through the process pool with the configured workers"""
        config = Config('nns', HAMMING, trials=30, workers=2)
        with patch('sampling.runners.map_rebuild_trials', wraps=map_rebuild_trials) as mock_map:
            report = run_fairness_test(config, self.instance)
        mock_map.assert_called_once()
        self.assertEqual(mock_map.call_args.args[3:], (30, 2))
        self.assertEqual(report.trials, 30)

    def test_build_once_samplers_skip_processes(self):
        """Test samplers built once never use the rebuild pool"""
        with patch('sampling.runners.map_rebuild_trials') as mock_map:
            run_fairness_test(Config('nnis', HAMMING, trials=20, workers=2), self.instance)
        mock_map.assert_not_called()
