"""
Iterative sparse recovery: ISTA, FISTA, OAMP and VQC-CS.

Every solver works on torch tensors with optional leading batch dimensions
(``y: (..., M)``, ``A: (..., M, N)``) and returns a ``SolverTrajectory``.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch

from . import vqc_denoiser
from .exceptions import DegenerateDenoiserError, ParameterError, SingularityError
from .quantum import COMPLEX, REAL

logger = logging.getLogger(__name__)

TAU2_FLOOR = 1e-9
THRESHOLD_FACTORS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


class LeVariant(str, Enum):
    MATCHED_FILTER = 'mf'
    PSEUDO_INVERSE = 'pinv'
    LMMSE = 'lmmse'


@dataclass
class SolverTrajectory:
    """
    Per-iteration estimates of one solver run.

    ``nle_estimates`` starts with ``x_hat^0 = 0`` and therefore holds T+1
    entries; the other lists hold one entry per iteration.
    """
    le_estimates: list = field(default_factory=list)
    nle_estimates: list = field(default_factory=list)
    residual_mse: list = field(default_factory=list)
    tau2: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.le_estimates)

    @property
    def final(self):
        return self.nle_estimates[-1]

    def mse(self, x):
        """Per-instance MSE of x_hat^0..x_hat^T, shape ``(T+1,) + batch``."""
        return torch.stack([_energy(x_hat - x).mean(-1) for x_hat in self.nle_estimates])

    def detach(self):
        return SolverTrajectory(
            [t.detach() for t in self.le_estimates],
            [t.detach() for t in self.nle_estimates],
            [t.detach() for t in self.residual_mse],
            [t.detach() for t in self.tau2],
        )


def batch_tensors(batch):
    """``(y, A, x, sigma2)`` tensors of an ``InstanceBatch``."""
    return (
        torch.as_tensor(np.asarray(batch.observation), dtype=COMPLEX),
        torch.as_tensor(np.asarray(batch.pilot), dtype=COMPLEX),
        torch.as_tensor(np.asarray(batch.signal), dtype=COMPLEX),
        torch.as_tensor(np.asarray(batch.noise_var), dtype=REAL),
    )


def _energy(z):
    return z.real ** 2 + z.imag ** 2


def _matvec(matrix, vector):
    return (matrix @ vector.unsqueeze(-1)).squeeze(-1)


def _scalar(value, batch_shape):
    """Real tensor broadcastable against ``batch_shape``."""
    tensor = torch.as_tensor(value, dtype=REAL)
    return tensor.expand(batch_shape) if tensor.dim() == 0 else tensor


def _residual(y, A, x_hat):
    return y - _matvec(A, x_hat)


def decorrelation_matrix(A, variant=LeVariant.PSEUDO_INVERSE, tau2=None, sigma2=None):
    """Trace-normalized ``D = N / tr(D_hat A) * D_hat``."""
    variant = LeVariant(variant)
    m, n = A.shape[-2], A.shape[-1]
    batch_shape = A.shape[:-2]
    A_h = A.mH
    if variant is LeVariant.MATCHED_FILTER:
        d_hat = A_h
    elif variant is LeVariant.PSEUDO_INVERSE:
        gram = A @ A_h
        rank = torch.linalg.matrix_rank(gram, hermitian=True)
        if bool((rank < m).any()):
            raise SingularityError('Pilot matrix is not full row rank; pseudo-inverse is undefined.')
        d_hat = torch.linalg.solve(gram, A).mH
    else:
        if tau2 is None:
            raise ParameterError('LMMSE decorrelation needs tau2.')
        tau2 = _scalar(tau2, batch_shape)
        if bool((tau2 <= 0).any()):
            raise ParameterError('LMMSE decorrelation needs tau2 > 0.')
        sigma2 = _scalar(0.0 if sigma2 is None else sigma2, batch_shape)
        eye = torch.eye(m, dtype=COMPLEX)
        kernel = tau2[..., None, None] * (A @ A_h) + sigma2[..., None, None] * eye
        d_hat = torch.linalg.solve(kernel, tau2[..., None, None] * A).mH
    trace = torch.diagonal(d_hat @ A, dim1=-2, dim2=-1).sum(-1).real
    return (n / trace)[..., None, None] * d_hat


def le_step(y, A, x_hat, variant=LeVariant.PSEUDO_INVERSE, tau2=None, sigma2=None, D=None):
    """Linear estimate ``l = x_hat + D (y - A x_hat)``."""
    if D is None:
        D = decorrelation_matrix(A, variant, tau2, sigma2)
    return x_hat + _matvec(D, _residual(y, A, x_hat))


def le_error_variance(A, D, tau2, sigma2):
    """Error variance of the LE output: ``(||I - DA||_F^2 tau2 + ||D||_F^2 sigma2) / N``."""
    n = A.shape[-1]
    eye = torch.eye(n, dtype=COMPLEX)
    leak = torch.linalg.matrix_norm(eye - D @ A) ** 2
    gain = torch.linalg.matrix_norm(D) ** 2
    return (leak * tau2 + gain * sigma2) / n


def estimate_tau2(y, A, x_hat, sigma2):
    """``max((||y - A x_hat||^2 - M sigma2) / tr(A^H A), 1e-9)``."""
    m = A.shape[-2]
    residual = _energy(_residual(y, A, x_hat)).sum(-1)
    power = _energy(A).sum((-2, -1))
    sigma2 = torch.as_tensor(sigma2, dtype=REAL)
    return torch.clamp((residual - m * sigma2) / power, min=TAU2_FLOOR)


def mmse_denoise(l, tau2, rho):
    """
    Posterior mean under the Bernoulli-Gaussian prior.

    ``x_i = 0`` with probability ``1 - rho``, ``x_i ~ CN(0, 1/rho)`` otherwise,
    observed through ``l_i = x_i + CN(0, tau2)``. Returns the estimate and
    the average derivative (1/2)(dRe/dRe + dIm/dIm) over the last axis.
    """
    tau2 = torch.as_tensor(tau2, dtype=REAL)
    if bool((tau2 <= 0).any()):
        raise ParameterError('MMSE denoiser needs tau2 > 0.')
    if not 0 < rho <= 1:
        raise ParameterError(f'activity rate must lie in (0, 1], got {rho}.')
    tau2 = tau2.unsqueeze(-1) if tau2.dim() else tau2
    signal_var = 1.0 / rho
    energy = _energy(l)
    gain = signal_var / (signal_var + tau2)
    if rho >= 1:
        posterior = torch.ones_like(energy)
        slope = torch.zeros_like(energy)
    else:
        precision_gap = 1.0 / tau2 - 1.0 / (signal_var + tau2)
        logit = (
            math.log(rho / (1.0 - rho))
            + torch.log(tau2 / (signal_var + tau2))
            + energy * precision_gap
        )
        posterior = torch.sigmoid(logit)
        slope = posterior * (1.0 - posterior) * precision_gap
    estimate = (posterior * gain).to(COMPLEX) * l
    divergence = (gain * (posterior + slope * energy)).mean(-1)
    return estimate, divergence


def oamp_nle(l, tau2, rho, denoiser=mmse_denoise, tolerance=1e-12):
    """Divergence-free estimate ``(eta(l) - div * l) / (1 - div)``."""
    eta, divergence = denoiser(l, tau2, rho)
    divergence = torch.as_tensor(divergence, dtype=REAL)
    degenerate = (1.0 - divergence).abs() < tolerance
    if bool(degenerate.any()):
        raise DegenerateDenoiserError(
            'Denoiser divergence equals 1; the divergence-free correction is undefined.',
            mask=degenerate,
        )
    div = divergence.unsqueeze(-1) if divergence.dim() else divergence
    return (eta - div * l) / (1.0 - div)


def soft_threshold(u, threshold):
    """Complex soft threshold ``max(|u| - s, 0) * u / |u|``."""
    threshold = torch.as_tensor(threshold, dtype=REAL)
    if threshold.dim():
        threshold = threshold.unsqueeze(-1)
    magnitude = u.abs()
    shrink = torch.clamp(magnitude - threshold, min=0.0)
    safe = torch.where(magnitude > 0, magnitude, torch.ones_like(magnitude))
    return (shrink / safe).to(COMPLEX) * u


def _diagnostics(trajectory, y, A, x_hat, sigma2):
    trajectory.residual_mse.append(_energy(_residual(y, A, x_hat)).mean(-1))
    trajectory.tau2.append(estimate_tau2(y, A, x_hat, sigma2))


def _start(y, A):
    x_hat = torch.zeros(A.shape[:-2] + (A.shape[-1],), dtype=COMPLEX)
    return SolverTrajectory(nle_estimates=[x_hat]), x_hat


def _lipschitz(A):
    return torch.linalg.matrix_norm(A, ord=2) ** 2


def ista(y, A, threshold, T, sigma2=0.0):
    """Proximal gradient with step ``1 / lambda_max(A^H A)``."""
    if T < 0:
        raise ParameterError('T must be non-negative.')
    trajectory, x_hat = _start(y, A)
    step = 1.0 / _lipschitz(A)
    for _ in range(T):
        u = x_hat + step.unsqueeze(-1) * _matvec(A.mH, _residual(y, A, x_hat))
        x_hat = soft_threshold(u, threshold * step)
        trajectory.le_estimates.append(u)
        trajectory.nle_estimates.append(x_hat)
        _diagnostics(trajectory, y, A, x_hat, sigma2)
    return trajectory


def fista(y, A, threshold, T, sigma2=0.0):
    """ISTA with Nesterov momentum ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2``."""
    if T < 0:
        raise ParameterError('T must be non-negative.')
    trajectory, x_hat = _start(y, A)
    step = 1.0 / _lipschitz(A)
    z = x_hat
    t = 1.0
    for _ in range(T):
        u = z + step.unsqueeze(-1) * _matvec(A.mH, _residual(y, A, z))
        x_next = soft_threshold(u, threshold * step)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        z = x_next + ((t - 1.0) / t_next) * (x_next - x_hat)
        x_hat, t = x_next, t_next
        trajectory.le_estimates.append(u)
        trajectory.nle_estimates.append(x_hat)
        _diagnostics(trajectory, y, A, x_hat, sigma2)
    return trajectory


def _oamp_update(l, tau2_le, rho, x_prev):
    """Posterior mean ``eta(l)`` and the divergence-free input of the next LE step."""
    eta, divergence = mmse_denoise(l, tau2_le, rho)
    try:
        return eta, oamp_nle(l, tau2_le, rho, denoiser=lambda *_: (eta, divergence))
    except DegenerateDenoiserError as exc:
        logger.warning('Freezing %d degenerate OAMP estimate(s).', int(exc.mask.sum()))
        div = torch.where(exc.mask, torch.zeros_like(divergence), divergence)
        div = div.unsqueeze(-1) if div.dim() else div
        corrected = (eta - div * l) / (1.0 - div)
        mask = exc.mask.unsqueeze(-1) if exc.mask.dim() else exc.mask
        return eta, torch.where(mask, x_prev, corrected)


def oamp(y, A, rho, sigma2, T, variant=LeVariant.PSEUDO_INVERSE):
    """
    OAMP with the Bernoulli-Gaussian MMSE denoiser; ``x_hat^0 = 0``.

    ``nle_estimates`` records the posterior mean ``eta(l^t)``; the
    divergence-free correction only feeds the next LE step.
    """
    if T < 0:
        raise ParameterError('T must be non-negative.')
    variant = LeVariant(variant)
    trajectory, x_hat = _start(y, A)
    sigma2 = torch.as_tensor(sigma2, dtype=REAL)
    D = None if variant is LeVariant.LMMSE else decorrelation_matrix(A, variant)
    for _ in range(T):
        tau2 = estimate_tau2(y, A, x_hat, sigma2)
        D_t = decorrelation_matrix(A, variant, tau2, sigma2) if D is None else D
        l = le_step(y, A, x_hat, D=D_t)
        tau2_le = torch.clamp(le_error_variance(A, D_t, tau2, sigma2), min=TAU2_FLOOR)
        posterior, x_hat = _oamp_update(l, tau2_le, rho, x_hat)
        trajectory.le_estimates.append(l)
        trajectory.nle_estimates.append(posterior)
        trajectory.residual_mse.append(_energy(_residual(y, A, posterior)).mean(-1))
        trajectory.tau2.append(tau2)
    return trajectory


def vqc_cs(y, A, params, T, variant=LeVariant.PSEUDO_INVERSE, sigma2=0.0,
           prep_each_layer=True, shots=0, generator=None, gradient_method='autograd'):
    """
    VQC-CS: LE step, state-preparation angle, embedding, two VQC scaling
    factors and the scaling denoiser, repeated T times. Differentiable with
    respect to every tensor in ``params``.
    """
    if len(params) < T:
        raise ParameterError(f'vqc_cs needs {T} parameter sets, got {len(params)}.')
    variant = LeVariant(variant)
    trajectory, x_hat = _start(y, A)
    sigma2 = torch.as_tensor(sigma2, dtype=REAL)
    D = None if variant is LeVariant.LMMSE else decorrelation_matrix(A, variant)
    for t in range(T):
        tau2 = estimate_tau2(y, A, x_hat, sigma2)
        D_t = decorrelation_matrix(A, variant, tau2, sigma2) if D is None else D
        l = le_step(y, A, x_hat, D=D_t)
        v2 = vqc_denoiser.prep_angle(y, A, x_hat)
        r = vqc_denoiser.embed(l)
        options = {
            'prep_each_layer': prep_each_layer,
            'shots': shots,
            'generator': generator,
            'gradient_method': gradient_method,
        }
        s1 = vqc_denoiser.scaling_factors(r, v2, params[t].vqc_s1, **options)
        s2 = vqc_denoiser.scaling_factors(r, v2, params[t].vqc_s2, **options)
        x_hat = vqc_denoiser.denoise(l, s1, s2)
        trajectory.le_estimates.append(l)
        trajectory.nle_estimates.append(x_hat)
        trajectory.residual_mse.append(_energy(_residual(y, A, x_hat)).mean(-1))
        trajectory.tau2.append(tau2)
    return trajectory


def select_threshold(batch, T, solver='ista', factors=THRESHOLD_FACTORS):
    """
    Grid-search the ISTA/FISTA threshold ``f * sqrt(sigma2 log N)`` on a
    validation batch, minimizing the final mean MSE.
    """
    run = {'ista': ista, 'fista': fista}[solver]
    y, A, x, sigma2 = batch_tensors(batch)
    base = math.sqrt(max(float(sigma2.mean()), 1e-12) * math.log(A.shape[-1]))
    best = None
    for factor in factors:
        threshold = factor * base
        final = float(run(y, A, threshold, T, sigma2).mse(x)[-1].mean())
        if best is None or final < best[1]:
            best = (threshold, final)
    logger.info('Selected %s threshold %.4g (final MSE %.4g).', solver, best[0], best[1])
    return best[0]
