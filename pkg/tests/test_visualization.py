"""
Unit tests for the visualization module.

This module contains test cases for the convergence plot and its reference
slopes.
"""

import os
import tempfile
import unittest

import numpy as np
import pandas as pd
from visualization import plot_convergence, reference_line


class TestVisualization(unittest.TestCase):
    """Test cases for convergence plots."""

    def setUp(self):
        """A three-level table with a missing multiplier column."""
        self.table = pd.DataFrame({
            'h': [0.4, 0.2, 0.1],
            'err_energy': [0.16, 0.04, 0.01],
            'err_M': [np.nan, np.nan, np.nan],
        })

    def test_reference_line(self):
        """The guide passes through offset * anchor with the given slope."""
        values = reference_line([0.4, 0.2, 0.1], 0.1, 0.01, 2, offset=1.0)
        np.testing.assert_allclose(values, [0.16, 0.04, 0.01])
        half = reference_line([0.1], 0.1, 0.01, 2)
        np.testing.assert_allclose(half, [0.005])

    def test_plot_written(self):
        """An SVG is written; all-NaN columns are skipped."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'plots', 'convergence.svg')
            out = plot_convergence(self.table, path,
                                   columns=('err_energy', 'err_M', 'err_H1'),
                                   orders=(2,), title='demo')
            self.assertEqual(out, path)
            with open(path) as handle:
                self.assertIn('<svg', handle.read())

    def test_nothing_to_plot(self):
        """Empty tables and NaN-only columns produce no file."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'none.svg')
            with self.assertLogs('visualization', level='WARNING'):
                self.assertIsNone(plot_convergence(self.table.iloc[:0], path))
            with self.assertLogs('visualization', level='WARNING'):
                self.assertIsNone(
                    plot_convergence(self.table, path, columns=('err_M',))
                )
            self.assertFalse(os.path.exists(path))


if __name__ == '__main__':
    unittest.main()
