"""
Synthetic grant-free access instances.

Correlated device activity, Rayleigh channels, DFT-based pilot matrices and
noisy observations ``y = A x + z``. All randomness flows from numpy random
streams derived from ``ScenarioConfig.seed``.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import dft

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

# Spawn keys keep the dataset splits on independent streams.
SPLIT_KEYS = {
    'train': 0,
    'test': 1,
    'validation': 2,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    System parameters of one grant-free access scenario.

    Defaults reproduce the evaluation setting: N=10 devices, M=7 measurements,
    activity rate 0.2, correlation 0.6, 30 dB SNR and a well-conditioned pilot.
    """
    n_devices: int = 10
    n_measurements: int = 7
    activity_rate: float = 0.2
    correlation: float = 0.6
    snr_db: float = 30.0
    condition_number: float = 1.0
    seed: int = 2023
    shared_pilot: bool = False

    def __post_init__(self):
        if self.n_devices < 1 or self.n_measurements < 1:
            raise ParameterError('n_devices and n_measurements must be positive.')
        if self.n_measurements >= self.n_devices:
            raise ParameterError(
                f'n_measurements ({self.n_measurements}) must be below n_devices ({self.n_devices}).'
            )
        _check_rates(self.activity_rate, self.correlation)
        if self.condition_number < 1:
            raise ParameterError('condition_number must be at least 1.')
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError('seed must be a 64-bit unsigned integer.')

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return ScenarioConfig(**values)


@dataclass(frozen=True)
class PilotFactors:
    """Singular values and permutation of a pilot ``A = Λ Π F``."""
    singular_values: np.ndarray
    permutation: np.ndarray


@dataclass
class Instance:
    """One realization of (pilot, activity, channel, signal, observation)."""
    pilot: np.ndarray
    activity: np.ndarray
    channel: np.ndarray
    signal: np.ndarray
    observation: np.ndarray
    noise_var: float


@dataclass
class InstanceBatch:
    """
    A dataset stacked along a leading batch axis.

    Solvers and training operate on batches; ``instances()`` goes back to
    single ``Instance`` objects.
    """
    pilot: np.ndarray
    activity: np.ndarray
    channel: np.ndarray
    signal: np.ndarray
    observation: np.ndarray
    noise_var: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_instances(cls, instances, meta=None):
        instances = list(instances)
        if not instances:
            raise ParameterError('Cannot stack an empty instance list.')
        return cls(
            pilot=np.stack([inst.pilot for inst in instances]),
            activity=np.stack([inst.activity for inst in instances]),
            channel=np.stack([inst.channel for inst in instances]),
            signal=np.stack([inst.signal for inst in instances]),
            observation=np.stack([inst.observation for inst in instances]),
            noise_var=np.array([inst.noise_var for inst in instances], dtype=np.float64),
            meta=dict(meta or {}),
        )

    def __len__(self):
        return self.signal.shape[0]

    @property
    def n_devices(self):
        return self.signal.shape[1]

    @property
    def n_measurements(self):
        return self.observation.shape[1]

    def subset(self, index):
        index = np.asarray(index)
        return InstanceBatch(
            pilot=self.pilot[index],
            activity=self.activity[index],
            channel=self.channel[index],
            signal=self.signal[index],
            observation=self.observation[index],
            noise_var=self.noise_var[index],
            meta=dict(self.meta),
        )


def _check_rates(rho, gamma):
    if not 0 < rho < 1:
        raise ParameterError(f'activity rate must lie in (0, 1), got {rho}.')
    if not 0 <= gamma < 1:
        raise ParameterError(f'correlation must lie in [0, 1), got {gamma}.')


def transition_probabilities(rho, gamma):
    """
    Return ``(P(1|1), P(1|0))`` of the stationary binary Markov chain with
    marginal ``rho`` and lag-d correlation ``gamma**d``.
    """
    _check_rates(rho, gamma)
    return rho + gamma * (1.0 - rho), rho * (1.0 - gamma)


def gen_activity(n, rho, gamma, rng):
    """Correlated device activity as a first-order binary Markov chain."""
    p11, p01 = transition_probabilities(rho, gamma)
    draws = rng.random(n)
    activity = np.empty(n, dtype=np.int8)
    state = draws[0] < rho
    activity[0] = state
    for i in range(1, n):
        state = draws[i] < (p11 if state else p01)
        activity[i] = state
    return activity


def gen_channel(n, rho, rng):
    """Rayleigh channel coefficients, ``h_i ~ CN(0, 1/rho)``."""
    if rho <= 0:
        raise ParameterError(f'activity rate must be positive, got {rho}.')
    scale = math.sqrt(1.0 / (2.0 * rho))
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


@lru_cache(maxsize=16)
def _unitary_dft(n):
    matrix = dft(n, scale='sqrtn')
    matrix.setflags(write=False)
    return matrix


def singular_values(n, m, kappa):
    """Geometric singular-value profile summing to ``n`` with ratio ``kappa**(1/m)``."""
    if kappa < 1:
        raise ParameterError(f'condition number must be at least 1, got {kappa}.')
    ratio = kappa ** (1.0 / m)
    profile = ratio ** -np.arange(m, dtype=np.float64)
    return profile * (n / profile.sum())


def build_pilot(n, m, kappa, rng):
    """
    Pilot matrix ``A = Λ Π F``.

    Λ is M×N with ``diag(λ)`` in its left block, Π a uniformly random
    permutation and F the unitary DFT, so only the first M permuted DFT rows
    survive.
    """
    if m >= n:
        raise ParameterError(f'pilot needs m < n, got m={m}, n={n}.')
    lambdas = singular_values(n, m, kappa)
    permutation = rng.permutation(n)
    pilot = lambdas[:, None] * _unitary_dft(n)[permutation[:m], :]
    return pilot, PilotFactors(singular_values=lambdas, permutation=permutation)


def noise_variance(pilot, snr_db):
    """Noise variance giving average per-measurement SNR ``snr_db`` for ``E|x_i|^2 = 1``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    m = pilot.shape[0]
    trace = float(np.sum(np.abs(pilot) ** 2))
    return trace / (m * 10.0 ** (snr_db / 10.0))


def transmit(pilot, signal, snr_db, rng):
    """Return ``(y, sigma2)`` with ``y = A x + z``; ``snr_db=inf`` disables noise."""
    if pilot.shape[1] != signal.shape[0]:
        raise ParameterError(
            f'pilot has {pilot.shape[1]} columns but signal has length {signal.shape[0]}.'
        )
    sigma2 = noise_variance(pilot, snr_db)
    observation = pilot @ signal
    if sigma2 > 0:
        m = pilot.shape[0]
        scale = math.sqrt(sigma2 / 2.0)
        observation = observation + scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return observation, sigma2


def torch_seed(*entropy):
    """64-bit ``torch.Generator`` seed mixed from non-negative integers of any size."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, dtype=np.uint64)[0])


def gen_instance(cfg, rng, pilot=None):
    """Draw one instance; a fresh pilot is built unless one is supplied."""
    n = cfg.n_devices
    if pilot is None:
        pilot, _ = build_pilot(n, cfg.n_measurements, cfg.condition_number, rng)
    activity = gen_activity(n, cfg.activity_rate, cfg.correlation, rng)
    channel = gen_channel(n, cfg.activity_rate, rng)
    signal = activity * channel
    observation, sigma2 = transmit(pilot, signal, cfg.snr_db, rng)
    return Instance(
        pilot=pilot,
        activity=activity,
        channel=channel,
        signal=signal,
        observation=observation,
        noise_var=sigma2,
    )


def gen_dataset(cfg, count, split='train', workers=1):
    """
    Deterministic dataset of ``count`` instances.

    Instance ``i`` of a split draws from its own child stream of
    ``SeedSequence(cfg.seed)``, so the result does not depend on ``workers``.
    """
    if count < 1:
        raise ParameterError(f'dataset count must be at least 1, got {count}.')
    if split not in SPLIT_KEYS:
        raise ParameterError(f'unknown split "{split}".')

    root = np.random.SeedSequence(cfg.seed, spawn_key=(SPLIT_KEYS[split],))
    pilot_seed, *instance_seeds = root.spawn(count + 1)

    shared = None
    if cfg.shared_pilot:
        shared, _ = build_pilot(
            cfg.n_devices, cfg.n_measurements, cfg.condition_number,
            np.random.default_rng(pilot_seed),
        )

    def draw(seed):
        return gen_instance(cfg, np.random.default_rng(seed), pilot=shared)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            instances = list(pool.map(draw, instance_seeds))
    else:
        instances = [draw(seed) for seed in instance_seeds]

    logger.info(
        'Generated %d %s instances (N=%d, M=%d, rho=%.3f, gamma=%.3f, snr=%.1f dB).',
        count, split, cfg.n_devices, cfg.n_measurements,
        cfg.activity_rate, cfg.correlation, cfg.snr_db,
    )
    return instances


def gen_batch(cfg, count, split='train', workers=1):
    """``gen_dataset`` stacked into an ``InstanceBatch``."""
    instances = gen_dataset(cfg, count, split=split, workers=workers)
    return InstanceBatch.from_instances(
        instances, meta={'scenario': cfg.to_dict(), 'split': split},
    )
