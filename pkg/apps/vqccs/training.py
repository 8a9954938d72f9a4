"""
End-to-end training of the unrolled VQC-CS pipeline.

All per-iteration ``DenoiserParams`` are optimized jointly with RMSProp under
the exponentially weighted MSE loss; gradients flow through every LE step,
embedding, state-preparation angle and circuit.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import torch

from . import __version__
from .cs_solvers import LeVariant, batch_tensors, vqc_cs
from .exceptions import NumericalError, ParameterError, ShapeMismatchError, TrainingDivergedError
from .system_model import torch_seed
from .vqc_denoiser import DenoiserParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1

GRADIENT_METHODS = ('autograd', 'parameter_shift')


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters; defaults give the reference scenario."""
    decay: float = 0.85
    learning_rate: float = 0.01
    n_layers: int = 3
    n_iterations: int = 10
    batch_size: int = 32
    epochs: int = 100
    optimizer: str = 'rmsprop'
    rmsprop_smoothing: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2
    share_parameters: bool = False
    le_variant: str = LeVariant.PSEUDO_INVERSE.value
    prep_each_layer: bool = True
    gradient_method: str = 'autograd'
    n_restarts: int = 1

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ParameterError(f'decay must lie in (0, 1], got {self.decay}.')
        if self.learning_rate <= 0:
            raise ParameterError('learning_rate must be positive.')
        if self.n_layers < 1 or self.n_iterations < 1:
            raise ParameterError('n_layers and n_iterations must be at least 1.')
        if self.batch_size < 1 or self.epochs < 0 or self.n_restarts < 1:
            raise ParameterError('batch_size and n_restarts must be positive, epochs non-negative.')
        if self.optimizer != 'rmsprop':
            raise ParameterError(f'unsupported optimizer "{self.optimizer}".')
        if not 0 <= self.rmsprop_smoothing < 1 or self.rmsprop_epsilon <= 0:
            raise ParameterError('rmsprop_smoothing must lie in [0, 1) and rmsprop_epsilon be positive.')
        if not 0 <= self.validation_fraction < 1:
            raise ParameterError('validation_fraction must lie in [0, 1).')
        if self.gradient_method not in GRADIENT_METHODS:
            raise ParameterError(f'gradient_method must be one of {GRADIENT_METHODS}.')
        LeVariant(self.le_variant)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return TrainConfig(**values)


@dataclass
class Checkpoint:
    """Trained per-iteration parameters plus the configuration that produced them."""
    params: list
    train_config: TrainConfig
    scenario: object
    loss_history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    mlp: object = None

    @property
    def shape(self):
        n, n_layers = self.params[0].shape
        return n, n_layers, len(self.params)

    def check_compatible(self, scenario, n_iterations=None):
        """Raise ``ShapeMismatchError`` unless the parameters fit ``scenario``."""
        n, n_layers, count = self.shape
        needed = n_iterations or self.train_config.n_iterations
        expected = (scenario.n_devices, self.train_config.n_layers, needed)
        if n != scenario.n_devices or n_layers != self.train_config.n_layers or count < needed:
            raise ShapeMismatchError(
                f'Checkpoint shape (N, L, T) = {(n, n_layers, count)} does not fit expected {expected}.',
                expected=expected,
                found=(n, n_layers, count),
            )

    def to_dict(self):
        shared = len({id(p) for p in self.params}) == 1 and len(self.params) > 1
        payload = {
            'format': CHECKPOINT_FORMAT,
            'version': __version__,
            'train_config': self.train_config.to_dict(),
            'scenario': self.scenario.to_dict(),
            'shared': shared,
            'params': [p.to_dict() for p in (self.params[:1] if shared else self.params)],
            'loss_history': self.loss_history,
            'best_epoch': self.best_epoch,
            'best_val_loss': self.best_val_loss,
            'mlp': self.mlp.to_dict() if self.mlp is not None else None,
        }
        return payload

    @classmethod
    def from_dict(cls, payload):
        from .postproc import MlpParams
        from .system_model import ScenarioConfig

        if payload.get('format') != CHECKPOINT_FORMAT:
            raise ShapeMismatchError(
                f'Unsupported checkpoint format {payload.get("format")}.',
                expected=CHECKPOINT_FORMAT,
                found=payload.get('format'),
            )
        train_config = TrainConfig(**payload['train_config'])
        params = [DenoiserParams.from_dict(p) for p in payload['params']]
        if payload.get('shared'):
            params = params * train_config.n_iterations
        return cls(
            params=params,
            train_config=train_config,
            scenario=ScenarioConfig(**payload['scenario']),
            loss_history=payload.get('loss_history', []),
            best_epoch=payload.get('best_epoch', 0),
            best_val_loss=payload.get('best_val_loss', math.inf),
            mlp=MlpParams.from_dict(payload['mlp']) if payload.get('mlp') else None,
        )


def loss(trajectory, x, zeta):
    """``(1/N) sum_t zeta^(T-t) ||x_hat^t - x||^2``, averaged over any batch axis."""
    T = trajectory.iterations
    if T < 1:
        raise ParameterError('loss needs at least one iteration.')
    n = x.shape[-1]
    total = 0.0
    for t, x_hat in enumerate(trajectory.nle_estimates[1:], start=1):
        error = x_hat - x
        total = total + zeta ** (T - t) * (error.real ** 2 + error.imag ** 2).sum(-1) / n
    return total.mean()


def initial_params(n, cfg, generator):
    """Per-iteration parameters, or one set repeated when ``share_parameters`` is on."""
    if cfg.share_parameters:
        return [DenoiserParams.initialize(n, cfg.n_layers, generator)] * cfg.n_iterations
    return [DenoiserParams.initialize(n, cfg.n_layers, generator) for _ in range(cfg.n_iterations)]


def _unique(params):
    seen, unique = set(), []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            unique.append(p)
    return unique


def _rebuild(params, unique, replacements):
    mapping = {id(old): new for old, new in zip(unique, replacements)}
    return [mapping[id(p)] for p in params]


def flat_tensors(params):
    return [t for p in _unique(params) for t in p.tensors()]


def _with_tensors(params, tensors):
    unique = _unique(params)
    replacements = [DenoiserParams.from_tensors(tensors[8 * k:8 * (k + 1)]) for k in range(len(unique))]
    return _rebuild(params, unique, replacements)


def _run(tensors, params, cfg, **options):
    y, A, x, sigma2 = tensors
    return vqc_cs(
        y, A, params, cfg.n_iterations,
        variant=cfg.le_variant,
        sigma2=sigma2,
        prep_each_layer=cfg.prep_each_layer,
        gradient_method=cfg.gradient_method,
        **options,
    )


def _as_tensors(batch):
    return batch if isinstance(batch, tuple) else batch_tensors(batch)


def loss_and_grad(batch, params, cfg):
    """Mean batch loss and its gradient with respect to every parameter tensor."""
    tensors = _as_tensors(batch)
    working = _with_tensors(params, [t.detach().clone().requires_grad_(True) for t in flat_tensors(params)])
    leaves = flat_tensors(working)
    with torch.enable_grad():
        trajectory = _run(tensors, working, cfg)
        value = loss(trajectory, tensors[2], cfg.decay)
        if not bool(torch.isfinite(value)):
            per_iteration = trajectory.detach().mse(tensors[2]).mean(-1)
            raise NumericalError(
                f'Non-finite training loss ({value.detach().item()}).',
                diagnostics={'iteration_mse': per_iteration.tolist()},
            )
        grads = torch.autograd.grad(value, leaves)
    return value.detach().item(), _with_tensors(params, list(grads))


def grad_all(batch, params, cfg):
    """Gradient container mirroring ``params`` (a list of ``DenoiserParams``)."""
    return loss_and_grad(batch, params, cfg)[1]


def rmsprop_step(params, grads, state, cfg):
    """
    One RMSProp update over matching tensor sequences.

    ``v <- beta v + (1 - beta) g^2``; ``theta <- theta - lr g / (sqrt(v) + eps)``.
    ``state=None`` starts from ``v = 0``. Returns ``(new_params, new_state)``.
    """
    beta = cfg.rmsprop_smoothing
    if state is None:
        state = [torch.zeros_like(p) for p in params]
    new_state = [beta * v + (1.0 - beta) * g * g for v, g in zip(state, grads)]
    new_params = [
        p - cfg.learning_rate * g / (torch.sqrt(v) + cfg.rmsprop_epsilon)
        for p, g, v in zip(params, grads, new_state)
    ]
    return new_params, new_state


def evaluate_loss(batch, params, cfg):
    tensors = _as_tensors(batch)
    with torch.no_grad():
        return float(loss(_run(tensors, params, cfg), tensors[2], cfg.decay))


def _select(tensors, index):
    return tuple(t[index] for t in tensors)


def _split(n, cfg):
    generator = torch.Generator().manual_seed(torch_seed(cfg.seed))
    order = torch.randperm(n, generator=generator)
    n_val = int(round(n * cfg.validation_fraction))
    if n_val == 0 or n_val == n:
        return order, order
    return order[n_val:], order[:n_val]


def train(dataset, cfg, scenario, restart=0):
    """
    Mini-batch RMSProp over ``cfg.epochs``.

    Returns the checkpoint with the best validation loss (epoch 0 is the
    initialization). A non-finite loss raises ``TrainingDivergedError``
    holding the last finite parameters.
    """
    if len(dataset) == 0:
        raise ParameterError('Training dataset is empty.')
    tensors = _as_tensors(dataset)
    train_idx, val_idx = _split(tensors[0].shape[0], cfg)
    train_data = _select(tensors, train_idx)
    val_data = _select(tensors, val_idx)

    generator = torch.Generator().manual_seed(torch_seed(cfg.seed, restart + 1))
    params = initial_params(scenario.n_devices, cfg, generator)

    def snapshot(current, history, best_epoch, best_val):
        return Checkpoint(
            params=[p.detach() for p in current] if not cfg.share_parameters
            else [current[0].detach()] * cfg.n_iterations,
            train_config=cfg,
            scenario=scenario,
            loss_history=list(history),
            best_epoch=best_epoch,
            best_val_loss=best_val,
        )

    history = [{
        'epoch': 0,
        'train_loss': evaluate_loss(train_data, params, cfg),
        'val_loss': evaluate_loss(val_data, params, cfg),
    }]
    best = snapshot(params, history, 0, history[0]['val_loss'])
    state = None
    n_train = train_idx.shape[0]

    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(n_train, generator=generator)
        weighted = 0.0
        for start in range(0, n_train, cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            try:
                value, grads = loss_and_grad(_select(train_data, index), params, cfg)
            except NumericalError as exc:
                raise TrainingDivergedError(
                    f'Training diverged in epoch {epoch}: {exc}',
                    checkpoint=snapshot(params, history, best.best_epoch, best.best_val_loss),
                    diagnostics=exc.diagnostics,
                ) from exc
            new_tensors, state = rmsprop_step(flat_tensors(params), flat_tensors(grads), state, cfg)
            candidate = _with_tensors(params, new_tensors)
            if not all(p.is_finite() for p in _unique(candidate)):
                raise TrainingDivergedError(
                    f'Non-finite parameters after an update in epoch {epoch}.',
                    checkpoint=snapshot(params, history, best.best_epoch, best.best_val_loss),
                )
            params = candidate
            weighted += value * index.shape[0]

        val_loss = evaluate_loss(val_data, params, cfg)
        history.append({'epoch': epoch, 'train_loss': weighted / n_train, 'val_loss': val_loss})
        logger.info('Epoch %d/%d: train loss %.6f, validation loss %.6f.',
                    epoch, cfg.epochs, weighted / n_train, val_loss)
        if val_loss < best.best_val_loss:
            best = snapshot(params, history, epoch, val_loss)

    best.loss_history = history
    return best


def train_with_restarts(dataset, cfg, scenario):
    """Train ``cfg.n_restarts`` initializations and keep the best validation loss."""
    best = None
    for restart in range(cfg.n_restarts):
        checkpoint = train(dataset, cfg, scenario, restart=restart)
        logger.info('Restart %d: best validation loss %.6f at epoch %d.',
                    restart, checkpoint.best_val_loss, checkpoint.best_epoch)
        if best is None or checkpoint.best_val_loss < best.best_val_loss:
            best = checkpoint
    return best
