"""
Unit tests for the command line interface.

This module contains test cases for argument handling, exit codes and the
files written by the study, solve and verify-geometry commands.
"""

import io
import os
import tempfile
import unittest
from contextlib import redirect_stdout
from unittest.mock import patch

import pandas as pd
from errors import ConfigurationError
from main import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PARTIAL,
    expected_orders,
    main,
    thread_count,
)
from run_config import config_from_dict

CONFIG_TEMPLATE = """\
method: p1
discretization: {{k: 1, k_g: 1, k_p: 2}}
parameters: {{eta: [1, 2]}}
study: {{levels: [1]}}
solver: {{maxit: {maxit}}}
output: {{dir: '{output}'}}
"""


class TestMain(unittest.TestCase):
    """End-to-end runs of the subcommands on level 1."""

    def setUp(self):
        """Write a p1 configuration into a temporary directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.output = os.path.join(self.tmp.name, 'out')
        self.path = self.write_config(maxit=5000)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, maxit):
        path = os.path.join(self.tmp.name, 'cli.yaml')
        with open(path, 'w') as handle:
            handle.write(CONFIG_TEMPLATE.format(maxit=maxit,
                                                output=self.output))
        return path

    def run_main(self, *argv):
        """Run main() with captured stdout."""
        buffer = io.StringIO()
        with patch.dict(os.environ, {'TRACEFEM_THREADS': '1'}), \
                redirect_stdout(buffer):
            code = main(list(argv))
        return code, buffer.getvalue()

    def test_missing_config(self):
        """A missing file is a configuration error."""
        code, _ = self.run_main('study', os.path.join(self.tmp.name,
                                                      'nope.yaml'), '--quiet')
        self.assertEqual(code, EXIT_CONFIG)

    def test_invalid_config(self):
        """Validation failures exit with 1."""
        with open(self.path, 'w') as handle:
            handle.write("method: p1\ndiscretization: {k: 1, k_g: 1}\n")
        code, _ = self.run_main('study', self.path, '--quiet')
        self.assertEqual(code, EXIT_CONFIG)

    def test_study(self):
        """A successful study exits 0 and writes results and plot."""
        code, out = self.run_main('study', self.path, '--quiet',
                                  '--deterministic', '--plot')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('err_energy', out)
        table = pd.read_csv(os.path.join(self.output, 'results.csv'))
        self.assertEqual(list(table['level']), [1])
        self.assertEqual(table['seconds'].iloc[0], 0.0)
        self.assertTrue(os.path.exists(os.path.join(self.output,
                                                    'results.json')))
        self.assertTrue(os.path.exists(os.path.join(self.output,
                                                    'convergence.svg')))

    def test_study_partial(self):
        """A failing level exits with 2."""
        self.write_config(maxit=1)
        code, out = self.run_main('study', self.path, '--quiet')
        self.assertEqual(code, EXIT_PARTIAL)
        self.assertIn('failed in stage solve', out)

    def test_solve(self):
        """One level with its reports and the exported system."""
        code, out = self.run_main('solve', self.path, '--level', '1',
                                  '--quiet', '--export-matrix')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('cg: converged', out)
        self.assertIn('err_energy', out)
        self.assertTrue(os.path.exists(os.path.join(self.output,
                                                    'level1_p1.mtx')))

    def test_solve_invalid_level(self):
        """A negative level is a configuration error."""
        code, _ = self.run_main('solve', self.path, '--level', '-1',
                                '--quiet')
        self.assertEqual(code, EXIT_CONFIG)

    def test_verify_geometry(self):
        """The geometry table is written."""
        code, out = self.run_main('verify-geometry', self.path, '--quiet')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('normal_error', out)
        self.assertTrue(os.path.exists(os.path.join(self.output,
                                                    'geometry.csv')))

    def test_preset(self):
        """--preset resolves by name in place of a config path."""
        config = config_from_dict({
            'method': 'p1',
            'discretization': {'k': 1, 'k_g': 1, 'k_p': 2},
            'parameters': {'eta': [1, 2]},
            'study': {'levels': [1]},
            'solver': {'maxit': 5000},
            'output': {'dir': self.output},
        }, name='fig1_k1_optimal')
        with patch('main.load_preset', return_value=config) as loader:
            code, out = self.run_main('study', '--preset', 'fig1_k1_optimal',
                                      '--quiet', '--deterministic')
        loader.assert_called_once_with('fig1_k1_optimal')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('err_energy', out)
        self.assertTrue(os.path.exists(os.path.join(self.output,
                                                    'results.csv')))

    def test_unknown_preset(self):
        """An unknown preset name is a configuration error."""
        code, _ = self.run_main('study', '--preset', 'fig9_missing',
                                '--quiet')
        self.assertEqual(code, EXIT_CONFIG)

    def test_preset_and_path_exclusive(self):
        """Exactly one of a config path and --preset is accepted."""
        with patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                main(['study', self.path, '--preset', 'fig2_k2_loss'])
            with self.assertRaises(SystemExit):
                main(['study', '--quiet'])

    def test_bad_arguments(self):
        """argparse rejects a missing subcommand."""
        with patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                main([])


class TestHelpers(unittest.TestCase):
    """Environment and plotting helpers."""

    def test_thread_count(self):
        """TRACEFEM_THREADS must be a positive integer."""
        with patch.dict(os.environ, {'TRACEFEM_THREADS': '3'}):
            self.assertEqual(thread_count(), 3)
        for raw in ('0', 'many'):
            with patch.dict(os.environ, {'TRACEFEM_THREADS': raw}):
                with self.assertRaises(ConfigurationError):
                    thread_count()

    def test_expected_orders(self):
        """Reference slopes follow k and k_l."""
        penalty = config_from_dict({
            'method': 'p2', 'discretization': {'k': 2, 'k_g': 2, 'k_p': 3},
            'parameters': {'eta': [1, 2]},
        })
        self.assertEqual(expected_orders(penalty), (2,))
        lagrange = config_from_dict({
            'method': 'lagrange',
            'discretization': {'k': 2, 'k_g': 3, 'k_l': 1},
            'parameters': {'rho': [1, -1]},
        })
        self.assertEqual(expected_orders(lagrange), (1, 2))


if __name__ == '__main__':
    unittest.main()
