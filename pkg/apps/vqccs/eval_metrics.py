"""
Channel-estimation and activity-detection metrics.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from sklearn.metrics import auc as trapezoid_area
from sklearn.metrics import roc_curve

from .exceptions import ParameterError, UndefinedMetricError


def _as_complex(values):
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().numpy()
    return np.asarray(values)


def squared_error(x_hat, x):
    """Per-instance ``(1/N) ||x_hat - x||^2`` over the last axis."""
    x_hat, x = _as_complex(x_hat), _as_complex(x)
    if x_hat.shape != x.shape:
        raise ParameterError(f'estimate shape {x_hat.shape} differs from signal shape {x.shape}.')
    return np.mean(np.abs(x_hat - x) ** 2, axis=-1)


def mse(x_hat, x):
    """Sample-mean MSE over every leading instance axis."""
    return float(np.mean(squared_error(x_hat, x)))


def to_db(value):
    return 10.0 * math.log10(value) if value > 0 else -math.inf


def normalized_mse(x_hat, x):
    """``sum ||x_hat - x||^2 / sum ||x||^2`` over the dataset."""
    x_hat, x = _as_complex(x_hat), _as_complex(x)
    power = float(np.sum(np.abs(x) ** 2))
    if power == 0:
        raise UndefinedMetricError('Normalized MSE is undefined for an all-zero signal.')
    return float(np.sum(np.abs(x_hat - x) ** 2)) / power


def iteration_errors(trajectory, x):
    """Per-instance MSE of ``x_hat^0 .. x_hat^T``, shape ``(T+1,) + batch``."""
    return np.stack([squared_error(x_hat, x) for x_hat in trajectory.nle_estimates])


@dataclass
class RocCurve:
    false_positive_rate: np.ndarray
    true_positive_rate: np.ndarray
    thresholds: np.ndarray

    def points(self):
        return list(zip(self.false_positive_rate.tolist(), self.true_positive_rate.tolist()))


def roc_auc(scores, labels):
    """
    Pooled ROC over every (instance, device) pair and its trapezoidal AUC.

    Each distinct score is one threshold step, so ties move both rates at once.
    """
    scores = _as_complex(scores)
    scores = (np.abs(scores) if np.iscomplexobj(scores) else scores.astype(np.float64)).reshape(-1)
    labels = np.asarray(_as_complex(labels)).reshape(-1).astype(np.int64)
    if scores.shape != labels.shape:
        raise ParameterError(f'{scores.size} scores but {labels.size} labels.')
    if np.unique(labels).size != 2:
        raise UndefinedMetricError('ROC needs at least one active and one inactive device.')
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    curve = RocCurve(fpr, tpr, thresholds)
    return curve, float(trapezoid_area(fpr, tpr))


@dataclass
class MetricsReport:
    """Per-solver evaluation results of one test set."""
    mse: dict = field(default_factory=dict)
    normalized_mse: dict = field(default_factory=dict)
    roc: dict = field(default_factory=dict)
    auc: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)
    n_samples: int = 0
    config: dict = field(default_factory=dict)

    def add_solver(self, name, iteration_errors, final, x, activity, runtime=None):
        """
        Record one solver; ``iteration_errors`` holds per-instance MSE with
        shape ``(T+1, B)`` and ``final`` the estimates ``x_hat^T``.
        """
        iteration_errors = np.asarray(iteration_errors, dtype=np.float64)
        self.mse[name] = iteration_errors.mean(axis=-1).tolist()
        self.normalized_mse[name] = normalized_mse(final, x)
        curve, area = roc_auc(np.abs(_as_complex(final)), activity)
        self.roc[name] = curve.points()
        self.auc[name] = area
        if runtime is not None:
            self.runtime[name] = runtime

    def add_detector(self, name, probabilities, activity):
        curve, area = roc_auc(probabilities, activity)
        self.roc[name] = curve.points()
        self.auc[name] = area

    @property
    def solvers(self):
        return list(self.mse)

    def final_mse(self, solver):
        return self.mse[solver][-1]

    def summary(self):
        rows = []
        for solver in self.solvers:
            final = self.final_mse(solver)
            rows.append({
                'solver': solver,
                'final_mse': final,
                'final_mse_db': to_db(final),
                'normalized_mse': self.normalized_mse.get(solver),
                'auc': self.auc.get(solver),
                'runtime': self.runtime.get(solver),
            })
        for detector in self.auc:
            if detector not in self.mse:
                rows.append({'solver': detector, 'auc': self.auc[detector]})
        return rows

    def to_dict(self):
        return asdict(self)
