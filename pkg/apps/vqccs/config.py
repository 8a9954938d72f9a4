"""
Experiment configuration.

Values are layered: dataclass defaults, then the INI file, then
``VQCCS_<SECTION>_<KEY>`` environment variables, then command-line flags.
Every section is validated by its form in ``forms.py``.
"""
import configparser
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from django.conf import settings

from . import __version__
from .exceptions import ConfigurationError, ParameterError
from .forms import ExperimentForm, PostprocForm, ScenarioForm, SolversForm, TrainForm
from .postproc import MlpConfig
from .system_model import ScenarioConfig
from .training import TrainConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    solvers: tuple = ('ista', 'fista', 'oamp', 'vqc_cs')
    ista_threshold: float = None
    fista_threshold: float = None
    oamp_variant: str = 'pinv'

    def to_dict(self):
        values = asdict(self)
        values['solvers'] = list(self.solvers)
        return values


@dataclass(frozen=True)
class PostprocSettings:
    enabled: bool = True
    learning_rate: float = 0.005
    epochs: int = 200
    batch_size: int = 64
    rmsprop_smoothing: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0

    def mlp_config(self):
        values = asdict(self)
        values.pop('enabled')
        return MlpConfig(**values)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ExperimentSettings:
    output_dir: str = 'runs/default'
    n_train: int = 5000
    n_validation: int = 1000
    n_test: int = 5000
    min_eval_samples: int = 5000
    workers: int = 1
    chunk_size: int = 500
    shots: int = 0

    def to_dict(self):
        return asdict(self)


SECTIONS = {
    'scenario': (ScenarioForm, ScenarioConfig),
    'train': (TrainForm, TrainConfig),
    'solvers': (SolversForm, SolverConfig),
    'postproc': (PostprocForm, PostprocSettings),
    'experiment': (ExperimentForm, ExperimentSettings),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every validated section of one experiment."""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    solvers: SolverConfig = field(default_factory=SolverConfig)
    postproc: PostprocSettings = field(default_factory=PostprocSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    @property
    def output_dir(self):
        return Path(self.experiment.output_dir)

    def to_dict(self):
        return {name: getattr(self, name).to_dict() for name in SECTIONS}

    def config_hash(self):
        """Short SHA-256 of the canonical JSON of every section."""
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]

    def header(self):
        """Key/value pairs embedded in every output file."""
        return {'config_hash': self.config_hash(), 'version': __version__}

    def replace(self, section, **changes):
        values = {name: getattr(self, name) for name in SECTIONS}
        values[section] = _build(section, {**_as_strings(values[section]), **changes})
        return ExperimentConfig(**values)


def _as_strings(section):
    values = {}
    for key, value in asdict(section).items():
        if isinstance(value, (list, tuple)):
            value = ','.join(value)
        values[key] = '' if value is None else value
    return values


def _env_overrides(section, keys, environ):
    prefix = getattr(settings, 'VQCCS_ENV_PREFIX', 'VQCCS_')
    found = {}
    for key in keys:
        name = f'{prefix}{section}_{key}'.upper()
        if name in environ:
            found[key] = environ[name]
    return found


def _build(section, data):
    form_class, config_class = SECTIONS[section]
    form = form_class(data=data)
    if not form.is_valid():
        field_errors = {
            f'{section}.{name}': [str(message) for message in messages]
            for name, messages in form.errors.items()
        }
        raise ConfigurationError(f'Invalid [{section}] configuration.', field_errors=field_errors)
    try:
        return config_class(**form.cleaned_data)
    except ParameterError as exc:
        raise ConfigurationError(f'Invalid [{section}] configuration: {exc}',
                                 field_errors={section: [str(exc)]}) from exc


def load_config(path=None, overrides=None, environ=None):
    """
    Build an ``ExperimentConfig``.

    ``overrides`` maps section names to dicts of already-parsed values
    (command-line flags). Unknown sections or keys in the file are errors.
    """
    environ = os.environ if environ is None else environ
    overrides = overrides or {}
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f'Configuration file {path} does not exist.',
                                     field_errors={'config': ['file not found']})
        parser.read(path, encoding='utf-8')
        logger.info('Loaded configuration from %s.', path)

    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigurationError(f'Unknown configuration section(s): {", ".join(unknown)}.',
                                 field_errors={name: ['unknown section'] for name in unknown})

    sections = {}
    field_errors = {}
    for section, (_, config_class) in SECTIONS.items():
        keys = [f.name for f in fields(config_class)]
        data = _as_strings(config_class())
        if parser.has_section(section):
            for key, value in parser.items(section):
                if key not in keys:
                    field_errors[f'{section}.{key}'] = ['unknown key']
                data[key] = value
        data.update(_env_overrides(section, keys, environ))
        data.update(overrides.get(section, {}))
        try:
            sections[section] = _build(section, data)
        except ConfigurationError as exc:
            field_errors.update(exc.field_errors)
    if field_errors:
        raise ConfigurationError('Invalid configuration.', field_errors=field_errors)
    return ExperimentConfig(**sections)


def cli_overrides(options):
    """Map the shared command-line flags onto configuration sections."""
    overrides = {}
    if options.get('seed') is not None:
        overrides.setdefault('scenario', {})['seed'] = options['seed']
        overrides.setdefault('train', {})['seed'] = options['seed']
    experiment = {
        key: options[key]
        for key in ('workers', 'shots')
        if options.get(key) is not None
    }
    if options.get('out'):
        experiment['output_dir'] = options['out']
    if experiment:
        overrides['experiment'] = experiment
    return overrides
