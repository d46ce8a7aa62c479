"""
Integration tests for the gen, build, query, fairness and bench commands
"""

import os
import tempfile
from io import StringIO

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from sampling.dataset_io import load_dataset
from sampling.models import ExperimentRun


HAMMING_ARGS = ['--metric', 'hamming', '--r', '4', '--c', '4']


def parse_kv(text):
    return dict(line.split('=', 1) for line in text.strip().splitlines() if '=' in line)


class CommandTestCase(TestCase):
    """Shared scratch directory and command runner"""

    def setUp(self):
        """Create a scratch directory"""
        self.scratch = tempfile.TemporaryDirectory()
        self.addCleanup(self.scratch.cleanup)

    def path(self, name):
        return os.path.join(self.scratch.name, name)

    def run_command(self, name, *args):
        out = StringIO()
        call_command(name, *args, stdout=out)
        return out.getvalue()


class GenBuildQueryTest(CommandTestCase):
    """Test cases for the file-based workflow"""

    def generate(self, *extra):
        return self.run_command(
            'gen', *HAMMING_ARGS, '--n', '120', '--dim', '64', '--near', '4', '--seed', '3',
            '--out', self.path('data.txt'), '--query-out', self.path('q.txt'), *extra,
        )

    def test_gen_writes_instance(self):
        """Test gen writes the dataset and the query and reports the planted ids"""
        report = parse_kv(self.generate())
        self.assertEqual(report['n'], '120')
        self.assertEqual(len(report['near_ids'].split(',')), 4)
        self.assertEqual(load_dataset(self.path('data.txt')).n, 120)
        self.assertEqual(load_dataset(self.path('q.txt')).n, 1)

    def test_gen_binary(self):
        """Test gen can write binary files"""
        self.generate('--format', 'binary')
        with open(self.path('data.txt'), 'rb') as handle:
            self.assertEqual(handle.read(4), b'FANN')

    def test_build_then_query(self):
        """Test a saved structure answers repeated queries with near points"""
        near_ids = parse_kv(self.generate())['near_ids'].split(',')
        report = parse_kv(self.run_command(
            'build', '--input', self.path('data.txt'), '--sampler', 'nnis', *HAMMING_ARGS,
            '--out', self.path('index.fann'),
        ))
        self.assertEqual(report['sampler'], 'nnis')
        output = self.run_command(
            'query', '--structure', self.path('index.fann'), '--query', self.path('q.txt'),
            '--repeat', '5', '--seed', '1',
        )
        lines = output.strip().splitlines()
        self.assertEqual(len(lines), 5)
        for line in lines:
            fields = dict(part.split('=') for part in line.split())
            self.assertIn(fields['outcome'], near_ids)
            self.assertGreater(int(fields['buckets']), 0)

    def test_query_is_reproducible(self):
        """Test the same query seed prints the same answers"""
        self.generate()
        self.run_command('build', '--input', self.path('data.txt'), '--sampler', 'nns_naive',
                         *HAMMING_ARGS, '--out', self.path('index.fann'))
        args = ['--structure', self.path('index.fann'), '--query', self.path('q.txt'),
                '--repeat', '8', '--seed', '4']
        self.assertEqual(self.run_command('query', *args), self.run_command('query', *args))

    def test_missing_dataset(self):
        """Test a missing input file is a command error"""
        with self.assertRaises(CommandError):
            self.run_command('build', '--input', self.path('absent.txt'), *HAMMING_ARGS,
                             '--out', self.path('index.fann'))

    def test_query_dimension_mismatch(self):
        """Test queries of the wrong dimension are a command error"""
        self.generate()
        self.run_command('build', '--input', self.path('data.txt'), '--sampler', 'oracle',
                         *HAMMING_ARGS, '--out', self.path('index.fann'))
        with open(self.path('bad.txt'), 'w') as handle:
            handle.write("1 3\n0 1 0\n")
        with self.assertRaises(CommandError):
            self.run_command('query', '--structure', self.path('index.fann'),
                             '--query', self.path('bad.txt'))

    def test_not_a_structure(self):
        """Test a dataset passed as a structure is a command error"""
        self.generate()
        with self.assertRaises(CommandError):
            self.run_command('query', '--structure', self.path('data.txt'), '--query', self.path('q.txt'))

    def test_non_ascii_dataset(self):
        """Test a dataset with non-ASCII bytes is a one-line command error"""
        with open(self.path('bad.txt'), 'wb') as handle:
            handle.write(b"1 2\n0.5 \xff\n")
        with self.assertRaisesRegex(CommandError, 'non-ASCII'):
            self.run_command('build', '--input', self.path('bad.txt'), *HAMMING_ARGS,
                             '--out', self.path('index.fann'))

    def test_non_finite_query(self):
        """Test a query file holding nan is a command error"""
        self.generate()
        self.run_command('build', '--input', self.path('data.txt'), '--sampler', 'oracle',
                         *HAMMING_ARGS, '--out', self.path('index.fann'))
        with open(self.path('nan.txt'), 'w') as handle:
            handle.write("1 64\n" + " ".join(['0'] * 63 + ['nan']) + "\n")
        with self.assertRaisesRegex(CommandError, 'non-finite'):
            self.run_command('query', '--structure', self.path('index.fann'),
                             '--query', self.path('nan.txt'))


class FairnessCommandTest(CommandTestCase):
    """Test cases for the fairness command"""

    def test_oracle_report(self):
        """Test the report lists the stable keys and passes for the exact sampler"""
        report = parse_kv(self.run_command(
            'fairness', '--sampler', 'oracle', *HAMMING_ARGS, '--n', '100', '--near', '5',
            '--trials', '1500', '--seed', '2',
        ))
        self.assertEqual(report['ball_size'], '5')
        self.assertEqual(report['trials'], '1500')
        self.assertEqual(report['passed'], 'true')

    def test_table_report(self):
        """Test the table style prints a titled summary"""
        output = self.run_command(
            'fairness', '--sampler', 'oracle', *HAMMING_ARGS, '--n', '60', '--trials', '50',
            '--report', 'table',
        )
        self.assertIn('FAIRNESS REPORT', output)

    def test_save(self):
        """Test --save stores the run"""
        self.run_command('fairness', '--sampler', 'oracle', *HAMMING_ARGS, '--n', '60',
                         '--trials', '50', '--save')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.kind, ExperimentRun.Kind.FAIRNESS)
        self.assertEqual(run.sampler, 'oracle')

    def test_invalid_constant(self):
        """Test unknown --const names are a command error"""
        with self.assertRaises(CommandError):
            self.run_command('fairness', *HAMMING_ARGS, '--const', 'NOPE=1')

    def test_invalid_metric_thresholds(self):
        """Test c <= 1 is a command error"""
        with self.assertRaises(CommandError):
            self.run_command('fairness', '--metric', 'hamming', '--r', '4', '--c', '1')

    def test_filter_needs_inner_product(self):
        """Test filter samplers reject distance metrics"""
        with self.assertRaises(CommandError):
            self.run_command('fairness', '--sampler', 'filter_nnis', *HAMMING_ARGS)

    def test_out_writes_report_file(self):
        """Test --out writes the same report that is printed"""
        output = self.run_command(
            'fairness', '--sampler', 'oracle', *HAMMING_ARGS, '--n', '60', '--trials', '50',
            '--out', self.path('fairness.txt'),
        )
        with open(self.path('fairness.txt')) as handle:
            written = handle.read()
        self.assertEqual(written, output.rstrip('\n') + '\n')
        self.assertEqual(parse_kv(written)['trials'], '50')

    def test_out_unwritable(self):
        """Test an unwritable --out path is a command error"""
        with self.assertRaises(CommandError):
            self.run_command('fairness', '--sampler', 'oracle', *HAMMING_ARGS, '--n', '60',
                             '--trials', '10', '--out', self.path('missing/report.txt'))


class BenchCommandTest(CommandTestCase):
    """Test cases for the bench command"""

    def test_counts_work(self):
        """Test the benchmark prints counters for the queries"""
        report = parse_kv(self.run_command(
            'bench', '--sampler', 'nns', *HAMMING_ARGS, '--n', '200', '--near', '5', '--cnear', '10',
            '--queries', '5',
        ))
        self.assertEqual(report['queries'], '5')
        self.assertGreater(int(report['total_inspected']), 0)
        self.assertGreater(int(report['buckets_touched']), 0)

    def test_inner_product_instance(self):
        """Test the filter sampler benchmark on a planted unit-vector instance"""
        report = parse_kv(self.run_command(
            'bench', '--sampler', 'filter_nnis', '--metric', 'inner_product', '--alpha', '0.8',
            '--beta', '0.4', '--n', '100', '--dim', '32', '--near', '4', '--queries', '3', '--save',
        ))
        self.assertEqual(report['queries'], '3')
        self.assertLessEqual(int(report['bottom_count']), 3)
        self.assertEqual(ExperimentRun.objects.get().kind, ExperimentRun.Kind.BENCH)

    def test_out_writes_report_file(self):
        """Test --out stores the benchmark keys in a file"""
        self.run_command(
            'bench', '--sampler', 'nns', *HAMMING_ARGS, '--n', '100', '--near', '3',
            '--queries', '2', '--report', 'both', '--out', self.path('bench.txt'),
        )
        with open(self.path('bench.txt')) as handle:
            written = handle.read()
        self.assertIn('BENCHMARK REPORT', written)
        self.assertEqual(parse_kv(written)['queries'], '2')
