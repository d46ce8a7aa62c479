"""
Unit tests for report rendering
"""

import os
import tempfile

from django.test import TestCase

from sampling.reports import format_kv, format_table, format_value, render, write_report


class ReportRenderingTest(TestCase):
    """Test cases for key=value and table output"""

    def setUp(self):
        """Set up report items"""
        self.items = [('sampler', 'nnis'), ('tvd', 0.0125), ('passed', True), ('note', None)]

    def test_values(self):
        """Test booleans and None are lower-case words"""
        self.assertEqual([format_value(v) for _, v in self.items], ['nnis', '0.0125', 'true', 'none'])

    def test_kv_lines_keep_order(self):
        """Test one key=value line per item in order"""
        self.assertEqual(format_kv(self.items), "sampler=nnis\ntvd=0.0125\npassed=true\nnote=none")

    def test_table(self):
        """Test the table has a title between rules and aligned keys"""
        lines = format_table(self.items, 'Fairness report').splitlines()
        self.assertEqual(lines[1], 'FAIRNESS REPORT')
        self.assertTrue(lines[0].startswith('=') and lines[-1].startswith('='))
        self.assertIn('   sampler  nnis', lines)

    def test_render_styles(self):
        """Test kv, table and both"""
        self.assertEqual(render(self.items, 'Run'), format_kv(self.items))
        self.assertEqual(render(self.items, 'Run', 'table'), format_table(self.items, 'Run'))
        both = render(self.items, 'Run', 'both')
        self.assertTrue(both.startswith(format_table(self.items, 'Run')))
        self.assertTrue(both.endswith(format_kv(self.items)))


class WriteReportTest(TestCase):
    """Test cases for saving rendered reports"""

    def setUp(self):
        """Create a scratch directory"""
        self.scratch = tempfile.TemporaryDirectory()
        self.addCleanup(self.scratch.cleanup)

    def test_writes_with_newline(self):
        """Test the report lands in the file with a trailing newline"""
        path = os.path.join(self.scratch.name, 'report.txt')
        write_report("sampler=nnis\npassed=true", path)
        with open(path) as handle:
            self.assertEqual(handle.read(), "sampler=nnis\npassed=true\n")

    def test_no_path_writes_nothing(self):
        """Test a missing path is a no-op"""
        write_report("sampler=nnis", None)
        self.assertEqual(os.listdir(self.scratch.name), [])
