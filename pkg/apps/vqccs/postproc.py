"""
Post-processing MLP for device-activity detection.

Maps the final estimate magnitudes ``|x_hat^T|`` to per-device activity
probabilities through ``N -> 4N -> 2N -> N`` with ReLU hidden layers and a
logistic output, trained on binary cross-entropy.
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import NumericalError, ParameterError
from .quantum import REAL
from .system_model import torch_seed
from .training import rmsprop_step
from .vqc_denoiser import decode_tensor, encode_tensor

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    learning_rate: float = 0.005
    epochs: int = 200
    batch_size: int = 64
    rmsprop_smoothing: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ParameterError('MLP learning_rate and batch_size must be positive, epochs non-negative.')

    def to_dict(self):
        return asdict(self)


@dataclass
class MlpParams:
    """Weights ``(out, in)`` and biases of the three dense layers."""
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ParameterError('MLP needs exactly three layers.')
        n = self.weights[0].shape[1]
        expected = [(4 * n, n), (2 * n, 4 * n), (n, 2 * n)]
        for layer, (w, b, shape) in enumerate(zip(self.weights, self.biases, expected)):
            if tuple(w.shape) != shape or tuple(b.shape) != (shape[0],):
                raise ParameterError(
                    f'layer {layer}: expected weight {shape} and bias ({shape[0]},), '
                    f'got {tuple(w.shape)} and {tuple(b.shape)}.'
                )

    @classmethod
    def initialize(cls, n, generator=None):
        """Uniform ``+-1/sqrt(fan_in)`` weights, zero biases."""
        sizes = [n, 4 * n, 2 * n, n]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append((torch.rand(fan_out, fan_in, generator=generator, dtype=REAL) * 2 - 1) * bound)
            biases.append(torch.zeros(fan_out, dtype=REAL))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, n):
        sizes = [n, 4 * n, 2 * n, n]
        return cls(
            [torch.zeros(o, i, dtype=REAL) for i, o in zip(sizes[:-1], sizes[1:])],
            [torch.zeros(o, dtype=REAL) for o in sizes[1:]],
        )

    @property
    def n_devices(self):
        return self.weights[0].shape[1]

    def tensors(self):
        return list(self.weights) + list(self.biases)

    @classmethod
    def from_tensors(cls, tensors):
        return cls(list(tensors[:3]), list(tensors[3:]))

    def detach(self):
        return MlpParams.from_tensors([t.detach().clone() for t in self.tensors()])

    def to_dict(self):
        return {
            'weights': [encode_tensor(w) for w in self.weights],
            'biases': [encode_tensor(b) for b in self.biases],
        }

    @classmethod
    def from_dict(cls, payload):
        return cls([decode_tensor(w) for w in payload['weights']], [decode_tensor(b) for b in payload['biases']])


def features(x_hat):
    """Detector input ``|x_hat|`` as a real tensor."""
    return torch.as_tensor(x_hat).abs().to(REAL)


def mlp_forward(features, params):
    """Activity probabilities in (0, 1); ``features`` has shape ``(..., N)``."""
    hidden = torch.as_tensor(features, dtype=REAL)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        hidden = F.relu(F.linear(hidden, w, b))
    return torch.sigmoid(F.linear(hidden, params.weights[-1], params.biases[-1]))


def bce_loss(probs, labels):
    """``-(1/N) sum [a log p + (1 - a) log(1 - p)]``, averaged over any batch axis."""
    probs = torch.clamp(torch.as_tensor(probs, dtype=REAL), PROB_CLAMP, 1.0 - PROB_CLAMP)
    labels = torch.as_tensor(labels, dtype=REAL)
    terms = labels * torch.log(probs) + (1.0 - labels) * torch.log1p(-probs)
    return -terms.mean()


def mlp_loss_and_grad(features, labels, params):
    leaves = [t.detach().clone().requires_grad_(True) for t in params.tensors()]
    with torch.enable_grad():
        value = bce_loss(mlp_forward(features, MlpParams.from_tensors(leaves)), labels)
        if not bool(torch.isfinite(value)):
            raise NumericalError(
                f'Non-finite MLP loss ({value.detach().item()}).',
                diagnostics={'feature_max': float(torch.as_tensor(features).max())},
            )
        grads = torch.autograd.grad(value, leaves)
    return value.detach().item(), list(grads)


def train_mlp(features, labels, cfg=None):
    """
    Mini-batch RMSProp on BCE; deterministic for a fixed ``cfg.seed``.

    Returns ``(params, history)`` where ``history[0]`` is the loss at
    initialization.
    """
    cfg = cfg or MlpConfig()
    features = torch.as_tensor(np.asarray(features), dtype=REAL)
    labels = torch.as_tensor(np.asarray(labels), dtype=REAL)
    if features.shape[0] == 0:
        raise ParameterError('MLP training set is empty.')
    if features.shape != labels.shape:
        raise ParameterError(f'features {tuple(features.shape)} and labels {tuple(labels.shape)} differ.')

    generator = torch.Generator().manual_seed(torch_seed(cfg.seed))
    params = MlpParams.initialize(features.shape[-1], generator)
    with torch.no_grad():
        history = [float(bce_loss(mlp_forward(features, params), labels))]
    state = None
    count = features.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(count, generator=generator)
        for start in range(0, count, cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            _, grads = mlp_loss_and_grad(features[index], labels[index], params)
            tensors, state = rmsprop_step(params.tensors(), grads, state, cfg)
            params = MlpParams.from_tensors(tensors)
        with torch.no_grad():
            history.append(float(bce_loss(mlp_forward(features, params), labels)))
        if not math.isfinite(history[-1]):
            raise NumericalError(f'MLP training diverged in epoch {epoch}.', diagnostics={'history': history})
        logger.debug('MLP epoch %d: loss %.6f', epoch, history[-1])
    logger.info('MLP trained: loss %.6f -> %.6f over %d epochs.', history[0], history[-1], cfg.epochs)
    return params, history


def detect(x_hat, params):
    """Activity probabilities for final estimates ``x_hat``."""
    with torch.no_grad():
        return mlp_forward(features(x_hat), params)
