"""
Experiment orchestration shared by the management commands.

Dataset generation, training, chunked evaluation of every solver on a test
split, parameter sweeps and the CSV/JSON exports of their results.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from . import storage
from .cs_solvers import batch_tensors, fista, ista, oamp, select_threshold, vqc_cs
from .eval_metrics import MetricsReport, iteration_errors, to_db
from .exceptions import ConfigurationError, DatasetMissingError, ShapeMismatchError
from .postproc import detect, train_mlp
from .system_model import gen_batch, torch_seed
from .training import train_with_restarts

logger = logging.getLogger(__name__)

SPLITS = ('train', 'validation', 'test')
THRESHOLD_SOLVERS = ('ista', 'fista')
MLP_DETECTOR = 'vqc_cs+mlp'
SWEEP_METRICS = ('final_mse', 'final_mse_db', 'auc')

# axis name -> (config section, field, type)
SWEEP_AXES = {
    'M': ('scenario', 'n_measurements', int),
    'gamma': ('scenario', 'correlation', float),
    'snr': ('scenario', 'snr_db', float),
    'T': ('train', 'n_iterations', int),
}


def data_dir(config):
    return config.output_dir / 'data'


def dataset_path(config, split):
    return data_dir(config) / f'{split}.npz'


def checkpoint_path(config):
    return config.output_dir / 'checkpoint.json'


def eval_dir(config):
    return config.output_dir / 'eval'


def _check_scenario(batch, scenario, name):
    found = (batch.n_devices, batch.n_measurements)
    expected = (scenario.n_devices, scenario.n_measurements)
    if found != expected:
        raise ShapeMismatchError(
            f'{name} dataset has (N, M) = {found}, configuration expects {expected}.',
            expected=expected,
            found=found,
        )


def load_split(config, split):
    batch = storage.load_dataset(dataset_path(config, split))
    _check_scenario(batch, config.scenario, split)
    return batch


# Dataset generation -----------------------------------------------------------

def generate_datasets(config, export_csv=False):
    """Write the train/validation/test splits and their manifest."""
    experiment = config.experiment
    counts = {
        'train': experiment.n_train,
        'validation': experiment.n_validation,
        'test': experiment.n_test,
    }
    files = []
    for split, count in counts.items():
        batch = gen_batch(config.scenario, count, split=split, workers=experiment.workers)
        path = dataset_path(config, split)
        storage.save_dataset(path, batch, header=config.header())
        files.append(path)
        if export_csv:
            csv_path = path.with_suffix('.csv')
            storage.export_dataset_csv(csv_path, batch, header=config.header())
            files.append(csv_path)
    return storage.write_manifest(data_dir(config), config, files, counts)


# Training ---------------------------------------------------------------------

def run_vqc_cs(checkpoint, tensors, n_iterations, shots=0, generator=None):
    y, A, _, sigma2 = tensors
    train_config = checkpoint.train_config
    with torch.no_grad():
        return vqc_cs(
            y, A, checkpoint.params, n_iterations,
            variant=train_config.le_variant,
            sigma2=sigma2,
            prep_each_layer=train_config.prep_each_layer,
            shots=shots,
            generator=generator,
        )


def run_training(config, path=None):
    """
    Train VQC-CS on the train split and, when enabled, the detection MLP.

    The checkpoint goes to ``path``, or to ``<out>/checkpoint.json`` by default.
    """
    batch = load_split(config, 'train')
    checkpoint = train_with_restarts(batch, config.train, config.scenario)
    logger.info('Best validation loss %.6f at epoch %d.', checkpoint.best_val_loss, checkpoint.best_epoch)
    if config.postproc.enabled:
        tensors = batch_tensors(batch)
        trajectory = run_vqc_cs(checkpoint, tensors, config.train.n_iterations)
        features = trajectory.final.abs().numpy()
        checkpoint.mlp, _ = train_mlp(features, batch.activity, config.postproc.mlp_config())
    save_training_outputs(config, checkpoint, path)
    return checkpoint


def save_training_outputs(config, checkpoint, path=None):
    path = path or checkpoint_path(config)
    storage.save_checkpoint(path, checkpoint, header=config.header())
    storage.write_loss_history(path.with_name('loss_history.csv'), checkpoint, header=config.header())
    return path


# Evaluation -------------------------------------------------------------------

def resolve_thresholds(config, validation):
    """Configured ISTA/FISTA thresholds, or a grid search on ``validation``."""
    thresholds = {}
    for solver in THRESHOLD_SOLVERS:
        if solver not in config.solvers.solvers:
            continue
        value = getattr(config.solvers, f'{solver}_threshold')
        if value is None:
            if validation is None:
                raise DatasetMissingError(f'Selecting the {solver} threshold needs a validation split.')
            value = select_threshold(validation, config.train.n_iterations, solver=solver)
        thresholds[solver] = value
    return thresholds


def run_solver(name, tensors, config, checkpoint=None, thresholds=None, generator=None):
    """One solver's trajectory on a chunk of instances."""
    y, A, _, sigma2 = tensors
    T = config.train.n_iterations
    if name == 'ista':
        return ista(y, A, thresholds['ista'], T, sigma2)
    if name == 'fista':
        return fista(y, A, thresholds['fista'], T, sigma2)
    if name == 'oamp':
        return oamp(y, A, config.scenario.activity_rate, sigma2, T, variant=config.solvers.oamp_variant)
    if name == 'vqc_cs':
        return run_vqc_cs(checkpoint, tensors, T, shots=config.experiment.shots, generator=generator)
    raise ConfigurationError(f'Unknown solver "{name}".', field_errors={'solvers.solvers': [name]})


def _chunks(count, size):
    return [np.arange(start, min(start + size, count)) for start in range(0, count, size)]


def evaluate(config, test, checkpoint=None, validation=None, include_detectors=True):
    """
    Run every configured solver on ``test`` and collect a ``MetricsReport``.

    Chunks are processed by ``experiment.workers`` threads; results are
    merged in chunk order so the report does not depend on the worker count.
    """
    solvers = config.solvers.solvers
    experiment = config.experiment
    if len(test) < experiment.min_eval_samples:
        raise ConfigurationError(
            f'Evaluation needs at least {experiment.min_eval_samples} instances, got {len(test)}.',
            field_errors={'experiment.min_eval_samples': [f'test split has {len(test)} instances']},
        )
    _check_scenario(test, config.scenario, 'test')
    if 'vqc_cs' in solvers:
        if checkpoint is None:
            raise ConfigurationError('VQC-CS evaluation needs a checkpoint.',
                                     field_errors={'solvers.solvers': ['vqc_cs requires --checkpoint']})
        checkpoint.check_compatible(config.scenario, config.train.n_iterations)
    thresholds = resolve_thresholds(config, validation)

    def work(job):
        position, index = job
        tensors = batch_tensors(test.subset(index))
        generator = torch.Generator().manual_seed(torch_seed(config.scenario.seed, position))
        results = {}
        for name in solvers:
            started = time.perf_counter()
            trajectory = run_solver(name, tensors, config, checkpoint, thresholds, generator)
            results[name] = (
                iteration_errors(trajectory, tensors[2]),
                trajectory.final.detach().numpy(),
                time.perf_counter() - started,
            )
        return results

    jobs = list(enumerate(_chunks(len(test), experiment.chunk_size)))
    if experiment.workers > 1:
        with ThreadPoolExecutor(max_workers=experiment.workers) as pool:
            partials = list(pool.map(work, jobs))
    else:
        partials = [work(job) for job in jobs]

    report = MetricsReport(n_samples=len(test), config=config.to_dict())
    for name in solvers:
        errors = np.concatenate([p[name][0] for p in partials], axis=-1)
        final = np.concatenate([p[name][1] for p in partials], axis=0)
        runtime = sum(p[name][2] for p in partials)
        report.add_solver(name, errors, final, test.signal, test.activity, runtime=runtime)
        logger.info('%s: final MSE %.4g (%.2f dB), AUC %.4f.',
                    name, report.final_mse(name), to_db(report.final_mse(name)), report.auc[name])
        if include_detectors and name == 'vqc_cs' and checkpoint.mlp is not None:
            probabilities = detect(final, checkpoint.mlp).numpy()
            report.add_detector(MLP_DETECTOR, probabilities, test.activity)
    return report


def write_eval_outputs(report, directory, header):
    """MSE per iteration, ROC points, AUC table and a JSON summary."""
    solvers = report.solvers
    n_rows = len(report.mse[solvers[0]])
    mse_rows = [[t] + [report.mse[s][t] for s in solvers] for t in range(n_rows)]
    mse_db_rows = [[t] + [to_db(report.mse[s][t]) for s in solvers] for t in range(n_rows)]
    roc_rows = [[name, fpr, tpr] for name, points in report.roc.items() for fpr, tpr in points]
    auc_rows = [[name, value] for name, value in report.auc.items()]

    paths = {
        'mse': directory / 'mse.csv',
        'mse_db': directory / 'mse_db.csv',
        'roc': directory / 'roc.csv',
        'auc': directory / 'auc.csv',
        'summary': directory / 'summary.json',
    }
    storage.write_csv(paths['mse'], ['iteration'] + solvers, mse_rows, header)
    storage.write_csv(paths['mse_db'], ['iteration'] + solvers, mse_db_rows, header)
    storage.write_csv(paths['roc'], ['solver', 'false_positive_rate', 'true_positive_rate'], roc_rows, header)
    storage.write_csv(paths['auc'], ['solver', 'auc'], auc_rows, header)
    storage.write_json(paths['summary'], {
        **header,
        'n_samples': report.n_samples,
        'solvers': report.summary(),
        'mse': report.mse,
        'config': report.config,
    })
    return paths


# Sweeps -----------------------------------------------------------------------

def parse_grid(axis, raw):
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f'Unknown sweep axis "{axis}".',
                                 field_errors={'axis': [f'choose one of {sorted(SWEEP_AXES)}']})
    _, _, kind = SWEEP_AXES[axis]
    try:
        values = [kind(item) for item in raw.split(',') if item.strip()]
    except ValueError as exc:
        raise ConfigurationError(f'Invalid sweep values "{raw}".', field_errors={'values': [str(exc)]}) from exc
    if not values:
        raise ConfigurationError('Sweep grid is empty.', field_errors={'values': ['no grid points']})
    return values


def run_sweep(config, axis, values, checkpoint=None):
    """
    Evaluate on fresh test/validation splits at every grid point.

    Returns tidy rows ``(axis, value, solver, metric, result)``: one per grid
    point, solver and metric.
    """
    if not values:
        raise ConfigurationError('Sweep grid is empty.', field_errors={'values': ['no grid points']})
    section, key, _ = SWEEP_AXES[axis]
    rows = []
    for value in values:
        point = config.replace(section, **{key: value})
        experiment = point.experiment
        test = gen_batch(point.scenario, experiment.n_test, split='test', workers=experiment.workers)
        validation = None
        if any(getattr(point.solvers, f'{s}_threshold') is None
               for s in THRESHOLD_SOLVERS if s in point.solvers.solvers):
            validation = gen_batch(point.scenario, experiment.n_validation, split='validation',
                                   workers=experiment.workers)
        report = evaluate(point, test, checkpoint, validation, include_detectors=False)
        for solver in report.solvers:
            final = report.final_mse(solver)
            results = {'final_mse': final, 'final_mse_db': to_db(final), 'auc': report.auc[solver]}
            rows.extend([axis, value, solver, metric, results[metric]] for metric in SWEEP_METRICS)
        logger.info('Sweep point %s=%s done.', axis, value)
    return rows


def write_sweep(path, rows, header):
    storage.write_csv(path, ['axis', 'value', 'solver', 'metric', 'result'], rows, header)
    return path
