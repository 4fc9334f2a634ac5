import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.test import SimpleTestCase, TestCase

import gfnlab

from .config import ExperimentConfig
from .models import ExperimentRun
from .records import record_run

EQUAL_SUMMARY = 'tv=0.250000 lower=0.250000 upper=0.375000 contained=true'
CONCENTRATED_SUMMARY = 'tv=0.375000 lower=0.250000 upper=0.375000 contained=true'


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return Path(self.tmp.name) / name

    def config_file(self, document):
        path = self.path('config.json')
        path.write_text(json.dumps(document) if not isinstance(document, str) else document, encoding='utf-8')
        return str(path)


class ConfigLayeringTests(TempDirMixin, SimpleTestCase):

    def sensitivity(self, **options):
        out = StringIO()
        call_command('sensitivity', stdout=out, **options)
        return out.getvalue()

    def test_config_file_fills_unset_flags(self):
        path = self.config_file({'graph': 'tree:g=2,h=2', 'delta': 1, 'F': 1, 'split': 'concentrated'})
        self.assertIn(CONCENTRATED_SUMMARY, self.sensitivity(config=path))

    def test_explicit_flag_beats_config_file(self):
        path = self.config_file({'graph': 'tree:g=2,h=2', 'delta': 1, 'F': 1, 'split': 'concentrated'})
        self.assertIn(EQUAL_SUMMARY, self.sensitivity(config=path, split='equal'))

    def test_unknown_key_is_rejected(self):
        path = self.config_file({'graph': 'tree:g=2,h=2', 'epochs': 3})
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=path)
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('epochs: Unknown field.', str(caught.exception))

    def test_record_flag_is_not_configurable(self):
        path = self.config_file({'graph': 'tree:g=2,h=2', 'record': True})
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=path)
        self.assertIn('record', str(caught.exception))

    def test_wrong_type(self):
        path = self.config_file({'graph': 'tree:g=2,h=2', 'delta': 'lots'})
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=path)
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('delta', str(caught.exception))

    def test_invalid_json(self):
        path = self.config_file('{"graph": ')
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=path)
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('config.json:1:', str(caught.exception))

    def test_config_must_be_an_object(self):
        path = self.config_file([1, 2])
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=path)
        self.assertEqual(caught.exception.returncode, 2)

    def test_missing_config_file(self):
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(config=str(self.path('absent.json')))
        self.assertEqual(caught.exception.returncode, 2)

    def test_identical_runs_write_identical_files(self):
        first, second = self.path('a.csv'), self.path('b.csv')
        options = dict(graph='tree:g=2,h=3', split='dirichlet:alpha=1', reps=200, seed=7)
        self.sensitivity(out=str(first), **options)
        self.sensitivity(out=str(second), **options)
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_negative_seed(self):
        with self.assertRaises(CommandError) as caught:
            self.sensitivity(graph='tree:g=2,h=2', seed=-1)
        self.assertEqual(caught.exception.returncode, 2)


class ExperimentConfigTests(SimpleTestCase):

    def test_get_falls_back_on_none(self):
        config = ExperimentConfig('train', {'epochs': None, 'seed': 3, 'verbosity': 1, 'config': 'x.json'})
        self.assertEqual(config.get('epochs', 10), 10)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.threads, 1)
        self.assertIsNone(config.capacity)
        self.assertEqual(config.as_record(), {'epochs': None, 'seed': 3})


class RunRecordTests(TestCase):

    def test_record_flag_stores_a_run(self):
        out = StringIO()
        call_command('sensitivity', graph='tree:g=2,h=2', split='equal', record=True, seed=5, stdout=out)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.subcommand, 'sensitivity')
        self.assertEqual(run.status, ExperimentRun.Status.SUCCEEDED)
        self.assertEqual(run.seed, 5)
        self.assertEqual(run.summary, EQUAL_SUMMARY)
        self.assertEqual(run.arguments['split'], 'equal')
        self.assertNotIn('verbosity', run.arguments)

    def test_invalid_run_is_recorded(self):
        with self.assertRaises(CommandError):
            call_command('sensitivity', record=True, stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.INVALID)

    def test_nothing_recorded_without_flag(self):
        call_command('sensitivity', graph='tree:g=2,h=2', stdout=StringIO())
        self.assertFalse(ExperimentRun.objects.exists())


class RecordFailureTests(SimpleTestCase):

    def test_database_error_is_swallowed(self):
        config = ExperimentConfig('train', {'seed': 0})
        with mock.patch.object(ExperimentRun.objects, 'create', side_effect=DatabaseError('read-only')):
            with self.assertLogs('experiments.records', 'WARNING'):
                self.assertIsNone(record_run(config, 'tv=0.1'))


class GfnlabRunTests(SimpleTestCase):

    def run_cli(self, argv):
        out, err = StringIO(), StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = gfnlab.run(argv)
        return code, out.getvalue(), err.getvalue()

    def test_sensitivity_summary(self):
        code, out, _ = self.run_cli(['sensitivity', '--graph', 'tree:g=2,h=2', '--delta', '1', '--F', '1', '--split', 'equal'])
        self.assertEqual(code, 0)
        self.assertIn(EQUAL_SUMMARY, out)

    def test_unknown_flag(self):
        code, _, err = self.run_cli(['sensitivity', '--bogus', '1'])
        self.assertEqual(code, 2)
        self.assertIn('--bogus', err)
        self.assertIn('usage:', err)

    def test_unknown_subcommand(self):
        code, _, err = self.run_cli(['plot'])
        self.assertEqual(code, 2)
        self.assertIn("unknown subcommand 'plot'", err)

    def test_no_arguments(self):
        code, _, err = self.run_cli([])
        self.assertEqual(code, 2)
        self.assertIn('subcommands:', err)

    def test_validation_error_exit_code(self):
        code, _, err = self.run_cli(['sensitivity', '--graph', 'tree:g=2,h=2', '--threads', '0'])
        self.assertEqual(code, 2)
        self.assertIn('--threads', err)

    def test_version(self):
        code, out, _ = self.run_cli(['--version'])
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith(f'gfnlab {gfnlab.__version__} (Django '))
        self.assertIn('numpy', out)
