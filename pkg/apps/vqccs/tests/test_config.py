import math
import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from apps.vqccs import __version__
from apps.vqccs.config import ExperimentConfig, cli_overrides, load_config
from apps.vqccs.exceptions import ConfigurationError
from apps.vqccs.forms import ScenarioForm, SolversForm

TOY_INI = """
[scenario]
n_devices = 4
n_measurements = 3
snr_db = inf
shared_pilot = true

[train]
n_layers = 2
n_iterations = 3
epochs = 2

[solvers]
solvers = oamp, vqc_cs
fista_threshold = 0.01

[experiment]
n_test = 64
min_eval_samples = 0
"""


class ConfigFileMixin:
    def write_config(self, text):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        path = Path(directory.name) / 'experiment.ini'
        path.write_text(text, encoding='utf-8')
        return path


class LoadConfigTests(ConfigFileMixin, SimpleTestCase):
    def test_defaults(self):
        config = load_config(environ={})
        self.assertEqual(config, ExperimentConfig())
        self.assertEqual(config.scenario.n_devices, 10)
        self.assertEqual(config.train.decay, 0.85)
        self.assertEqual(config.solvers.solvers, ('ista', 'fista', 'oamp', 'vqc_cs'))

    def test_file_values(self):
        config = load_config(self.write_config(TOY_INI), environ={})
        self.assertEqual((config.scenario.n_devices, config.scenario.n_measurements), (4, 3))
        self.assertEqual(config.scenario.snr_db, math.inf)
        self.assertTrue(config.scenario.shared_pilot)
        self.assertEqual(config.train.epochs, 2)
        self.assertEqual(config.solvers.solvers, ('oamp', 'vqc_cs'))
        self.assertEqual(config.solvers.fista_threshold, 0.01)
        self.assertIsNone(config.solvers.ista_threshold)
        self.assertEqual(config.experiment.n_test, 64)

    def test_reference_configuration(self):
        config = load_config(settings.BASE_DIR / 'configs' / 'reference.ini', environ={})
        self.assertEqual((config.scenario.n_devices, config.scenario.n_measurements), (10, 7))
        self.assertEqual(config.train.n_restarts, 3)
        self.assertEqual(config.experiment.n_test, 5000)

    def test_layering_order(self):
        path = self.write_config('[train]\nepochs = 4\n')
        self.assertEqual(load_config(path, environ={}).train.epochs, 4)
        environ = {'VQCCS_TRAIN_EPOCHS': '7'}
        self.assertEqual(load_config(path, environ=environ).train.epochs, 7)
        overridden = load_config(path, overrides={'train': {'epochs': 3}}, environ=environ)
        self.assertEqual(overridden.train.epochs, 3)

    @override_settings(VQCCS_ENV_PREFIX='LAB_')
    def test_custom_environment_prefix(self):
        config = load_config(environ={'LAB_SCENARIO_SNR_DB': '10', 'VQCCS_SCENARIO_SNR_DB': '20'})
        self.assertEqual(config.scenario.snr_db, 10.0)

    def test_unknown_section_and_key(self):
        with self.assertRaises(ConfigurationError) as caught:
            load_config(self.write_config('[network]\nport = 1\n'), environ={})
        self.assertIn('network', caught.exception.field_errors)
        with self.assertRaises(ConfigurationError) as caught:
            load_config(self.write_config('[train]\nmomentum = 0.9\n'), environ={})
        self.assertIn('train.momentum', caught.exception.field_errors)

    def test_all_field_errors_are_reported(self):
        text = '[scenario]\nn_measurements = 12\n[train]\ndecay = 0\n[experiment]\nn_test = 10\n'
        with self.assertRaises(ConfigurationError) as caught:
            load_config(self.write_config(text), environ={})
        errors = caught.exception.field_errors
        self.assertIn('scenario.n_measurements', errors)
        self.assertIn('train.decay', errors)
        self.assertIn('experiment.n_test', errors)

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_config('/nonexistent/experiment.ini', environ={})

    def test_command_line_flags(self):
        overrides = cli_overrides({'seed': 5, 'workers': 2, 'out': 'runs/x', 'shots': None, 'config': None})
        self.assertEqual(overrides, {
            'scenario': {'seed': 5},
            'train': {'seed': 5},
            'experiment': {'workers': 2, 'output_dir': 'runs/x'},
        })
        config = load_config(overrides=overrides, environ={})
        self.assertEqual(config.scenario.seed, 5)
        self.assertEqual(str(config.output_dir), 'runs/x')


class HashTests(SimpleTestCase):
    def test_hash_is_stable_and_sensitive(self):
        config = ExperimentConfig()
        self.assertEqual(config.config_hash(), ExperimentConfig().config_hash())
        self.assertEqual(len(config.config_hash()), 16)
        changed = config.replace('train', epochs=1)
        self.assertEqual(changed.train.epochs, 1)
        self.assertNotEqual(changed.config_hash(), config.config_hash())
        self.assertEqual(config.header(), {'config_hash': config.config_hash(), 'version': __version__})

    def test_replace_validates(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig().replace('scenario', correlation=1.0)


class FormTests(SimpleTestCase):
    def scenario_data(self, **changes):
        data = {
            'n_devices': '10', 'n_measurements': '7', 'activity_rate': '0.2', 'correlation': '0.6',
            'snr_db': '30', 'condition_number': '1', 'seed': '2023',
        }
        data.update(changes)
        return data

    def test_valid_scenario(self):
        form = ScenarioForm(data=self.scenario_data())
        self.assertTrue(form.is_valid(), form.errors)
        self.assertFalse(form.cleaned_data['shared_pilot'])

    def test_activity_rate_bounds(self):
        for value in ('0', '1', '-0.1'):
            form = ScenarioForm(data=self.scenario_data(activity_rate=value))
            self.assertFalse(form.is_valid())
            self.assertIn('activity_rate', form.errors)

    def test_solver_list(self):
        form = SolversForm(data={'solvers': 'OAMP, ista, oamp', 'oamp_variant': 'pinv'})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.cleaned_data['solvers'], ('oamp', 'ista'))
        form = SolversForm(data={'solvers': 'amp', 'oamp_variant': 'pinv'})
        self.assertFalse(form.is_valid())
