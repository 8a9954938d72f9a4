import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from apps.vqccs.exceptions import TrainingDivergedError
from apps.vqccs.models import ExperimentRun, recent_runs, record_run
from apps.vqccs.storage import read_csv
from apps.vqccs.system_model import ScenarioConfig
from apps.vqccs.training import Checkpoint, TrainConfig
from apps.vqccs.vqc_denoiser import DenoiserParams

TOY_INI = """
[scenario]
n_devices = 4
n_measurements = 3
seed = 11

[train]
n_layers = 2
n_iterations = 3
epochs = 2
batch_size = 16

[postproc]
epochs = 5
batch_size = 16

[experiment]
n_train = 64
n_validation = 32
n_test = 64
min_eval_samples = 0
chunk_size = 20
workers = 2
"""


class CommandTestCase(TestCase):
    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.tmp = Path(directory.name)
        self.config = self.tmp / 'toy.ini'
        self.config.write_text(TOY_INI, encoding='utf-8')
        self.out = self.tmp / 'run'

    def call(self, name, *args, **options):
        stdout = StringIO()
        options.setdefault('config', str(self.config))
        options.setdefault('out', str(self.out))
        call_command(name, *args, stdout=stdout, **options)
        return stdout.getvalue()

    def assertExitCode(self, code, name, *args, **options):
        with self.assertRaises(CommandError) as caught:
            self.call(name, *args, **options)
        self.assertEqual(caught.exception.returncode, code)
        return caught.exception


class PipelineTests(CommandTestCase):
    def test_full_pipeline(self):
        output = self.call('gen_data', export_csv=True)
        self.assertIn('Wrote 64 train instances.', output)
        manifest = json.loads((self.out / 'data' / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['counts'], {'train': 64, 'validation': 32, 'test': 64})
        self.assertTrue((self.out / 'data' / 'train.csv').exists())

        self.call('train')
        checkpoint = json.loads((self.out / 'checkpoint.json').read_text(encoding='utf-8'))
        self.assertEqual(len(checkpoint['params']), 3)
        self.assertIsNotNone(checkpoint['mlp'])
        _, _, history = read_csv(self.out / 'loss_history.csv')
        self.assertEqual(len(history), 3)

        output = self.call('eval')
        self.assertIn('vqc_cs+mlp', output)
        header, columns, rows = read_csv(self.out / 'eval' / 'mse.csv')
        self.assertEqual(columns, ['iteration', 'ista', 'fista', 'oamp', 'vqc_cs'])
        self.assertEqual(len(rows), 4)
        self.assertEqual(set(header), {'config_hash', 'version'})
        _, _, auc_rows = read_csv(self.out / 'eval' / 'auc.csv')
        self.assertEqual([row[0] for row in auc_rows], ['ista', 'fista', 'oamp', 'vqc_cs', 'vqc_cs+mlp'])
        for _, value in auc_rows:
            self.assertTrue(0.0 <= float(value) <= 1.0)

        self.call('sweep', axis='snr', values='10,30')
        _, columns, rows = read_csv(self.out / 'sweep_snr.csv')
        self.assertEqual(columns, ['axis', 'value', 'solver', 'metric', 'result'])
        self.assertEqual(len(rows), 2 * 4 * 3)

        self.call('report')
        report = (self.out / 'report.txt').read_text(encoding='utf-8')
        self.assertIn('oamp', report)
        self.assertTrue((self.out / 'report.pdf').read_bytes().startswith(b'%PDF'))

        kinds = list(ExperimentRun.objects.order_by('id').values_list('kind', 'status'))
        self.assertEqual(kinds, [(k, 'completed') for k in ('gen_data', 'train', 'eval', 'sweep', 'report')])

    def test_generation_is_reproducible(self):
        self.call('gen_data', out=str(self.tmp / 'a'), seed=5)
        self.call('gen_data', out=str(self.tmp / 'b'), seed=5)
        hashes = [
            json.loads((self.tmp / name / 'data' / 'manifest.json').read_text(encoding='utf-8'))['content_hash']
            for name in ('a', 'b')
        ]
        self.assertEqual(hashes[0], hashes[1])
        self.call('gen_data', out=str(self.tmp / 'c'), seed=6)
        other = json.loads((self.tmp / 'c' / 'data' / 'manifest.json').read_text(encoding='utf-8'))
        self.assertNotEqual(other['content_hash'], hashes[0])

    def test_custom_checkpoint_path(self):
        self.call('gen_data')
        custom = self.tmp / 'models' / 'toy.json'
        output = self.call('train', checkpoint=str(custom))
        self.assertIn(str(custom), output)
        self.assertTrue(custom.exists())
        self.assertTrue((custom.parent / 'loss_history.csv').exists())
        self.assertFalse((self.out / 'checkpoint.json').exists())
        self.assertFalse((self.out / 'loss_history.csv').exists())

    def test_largest_seed(self):
        self.config.write_text(TOY_INI.replace('seed = 11', f'seed = {2 ** 64 - 1}'), encoding='utf-8')
        self.call('gen_data')
        self.call('train')
        self.call('eval')
        _, _, rows = read_csv(self.out / 'eval' / 'mse.csv')
        self.assertEqual(len(rows), 4)
        self.assertEqual(ExperimentRun.objects.get(kind='eval').seed, str(2 ** 64 - 1))


class ExitCodeTests(CommandTestCase):
    def test_invalid_configuration(self):
        self.config.write_text(TOY_INI.replace('n_train = 64', 'n_train = 0'), encoding='utf-8')
        error = self.assertExitCode(1, 'gen_data')
        self.assertIn('experiment.n_train', str(error))
        self.assertFalse(self.out.exists())
        self.assertEqual(ExperimentRun.objects.get().status, 'failed')

    def test_unknown_key(self):
        self.config.write_text(TOY_INI.replace('epochs = 2', 'epochs = 2\nmomentum = 0.9'), encoding='utf-8')
        self.assertExitCode(1, 'gen_data')

    def test_missing_dataset(self):
        error = self.assertExitCode(2, 'eval')
        self.assertIn('gen_data', str(error))

    def test_missing_config_file(self):
        self.assertExitCode(1, 'gen_data', config=str(self.tmp / 'absent.ini'))

    def test_incompatible_checkpoint(self):
        self.call('gen_data')
        self.call('train')
        self.assertExitCode(1, 'sweep', axis='T', values='5')

    def test_empty_sweep_grid(self):
        self.assertExitCode(1, 'sweep', axis='snr', values=',')

    def test_evaluation_floor(self):
        self.call('gen_data')
        self.config.write_text(TOY_INI.replace('min_eval_samples = 0', 'min_eval_samples = 100'), encoding='utf-8')
        error = self.assertExitCode(1, 'eval')
        self.assertIn('experiment.n_test', str(error))

    def test_divergence(self):
        self.call('gen_data')
        checkpoint = Checkpoint(
            params=[DenoiserParams.initialize(4, 2) for _ in range(3)],
            train_config=TrainConfig(n_layers=2, n_iterations=3),
            scenario=ScenarioConfig(n_devices=4, n_measurements=3, seed=11),
        )
        failure = TrainingDivergedError('Training diverged in epoch 1: Non-finite training loss (nan).',
                                        checkpoint=checkpoint)
        with mock.patch('apps.vqccs.experiments.train_with_restarts', side_effect=failure):
            self.assertExitCode(3, 'train')
        self.assertTrue((self.out / 'checkpoint.json').exists())
        self.assertEqual(ExperimentRun.objects.get(kind='train').status, 'diverged')


class RegistryTests(TestCase):
    def test_record_and_list(self):
        record_run('gen_data', summary={'counts': {'train': 1}})
        record_run('eval', status='failed', message='boom')
        runs = recent_runs(5)
        self.assertEqual(len(runs), 2)
        self.assertEqual({run.kind for run in runs}, {'gen_data', 'eval'})

    def test_registry_failure_is_swallowed(self):
        with mock.patch.object(ExperimentRun.objects, 'create', side_effect=RuntimeError('db down')):
            self.assertIsNone(record_run('train'))
