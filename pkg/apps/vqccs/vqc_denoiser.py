"""
VQC denoiser for the non-linear estimation step.

The LE estimate is embedded into rotation angles, two independently
parameterized circuits produce scaling factors ``s1`` and ``s2`` and the
estimate is shrunk by ``s1 / (1 + s2)``.

Per qubit ``i`` and layer the gates act in this order::

    R_X(v2)  R_Y(r_1 w_i1) ... R_Y(r_N w_iN)  R_Z(a_il)  R_Y(b_il)  R_Z(c_il)

The data rotations all share the Y axis, so the batched kernel fuses them
into one ``R_Y(sum_j r_j w_ij)``; ``build_qubit_circuit`` keeps the explicit
gate list for inspection and the circuit tests.
"""
import math
from dataclasses import dataclass

import torch

from . import quantum
from .exceptions import ParameterError
from .quantum import COMPLEX, REAL, Axis

LAYER_AXES = (Axis.X, Axis.Y, Axis.Z, Axis.Y, Axis.Z)
ANGLE_BANKS = ('angles_a', 'angles_b', 'angles_c')


def encode_tensor(tensor):
    tensor = tensor.detach().to(REAL).contiguous()
    return {'shape': list(tensor.shape), 'data': tensor.reshape(-1).tolist()}


def decode_tensor(payload):
    return torch.tensor(payload['data'], dtype=REAL).reshape(payload['shape'])


@dataclass
class VqcParams:
    """Trainable quantities of one VQC at one CS iteration."""
    input_weights: torch.Tensor
    angles_a: torch.Tensor
    angles_b: torch.Tensor
    angles_c: torch.Tensor

    def __post_init__(self):
        n = self.input_weights.shape[0]
        if tuple(self.input_weights.shape) != (n, n):
            raise ParameterError(f'input_weights must be square, got {tuple(self.input_weights.shape)}.')
        shape = tuple(self.angles_a.shape)
        if len(shape) != 2 or shape[0] != n:
            raise ParameterError(f'angle banks must be ({n}, L), got {shape}.')
        if tuple(self.angles_b.shape) != shape or tuple(self.angles_c.shape) != shape:
            raise ParameterError('angle banks must share one shape.')

    @classmethod
    def initialize(cls, n, n_layers, generator=None):
        """``w ~ N(0, (pi/(2N))^2)``, angle banks ``~ U(-0.1, 0.1)``."""
        def uniform():
            return torch.rand(n, n_layers, generator=generator, dtype=REAL) * 0.2 - 0.1

        weights = torch.randn(n, n, generator=generator, dtype=REAL) * (math.pi / (2 * n))
        return cls(weights, uniform(), uniform(), uniform())

    @classmethod
    def zeros(cls, n, n_layers):
        return cls(
            torch.zeros(n, n, dtype=REAL),
            torch.zeros(n, n_layers, dtype=REAL),
            torch.zeros(n, n_layers, dtype=REAL),
            torch.zeros(n, n_layers, dtype=REAL),
        )

    @property
    def n_qubits(self):
        return self.input_weights.shape[0]

    @property
    def n_layers(self):
        return self.angles_a.shape[1]

    def tensors(self):
        return [self.input_weights, self.angles_a, self.angles_b, self.angles_c]

    @classmethod
    def from_tensors(cls, tensors):
        return cls(*tensors)

    def detach(self):
        return VqcParams.from_tensors([t.detach().clone() for t in self.tensors()])

    def requires_grad_(self):
        for tensor in self.tensors():
            tensor.requires_grad_(True)
        return self

    def is_finite(self):
        return all(bool(torch.isfinite(t).all()) for t in self.tensors())

    def flatten(self):
        """Flat vector ``[w, a, b, c]`` (row-major) used by ``build_qubit_circuit``."""
        return torch.cat([t.reshape(-1) for t in self.tensors()])

    def to_dict(self):
        return {
            'input_weights': encode_tensor(self.input_weights),
            **{bank: encode_tensor(getattr(self, bank)) for bank in ANGLE_BANKS},
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            decode_tensor(payload['input_weights']),
            *[decode_tensor(payload[bank]) for bank in ANGLE_BANKS],
        )


@dataclass
class DenoiserParams:
    """The two VQCs producing ``s1`` and ``s2`` at one CS iteration."""
    vqc_s1: VqcParams
    vqc_s2: VqcParams

    def __post_init__(self):
        shape_1 = (self.vqc_s1.n_qubits, self.vqc_s1.n_layers)
        shape_2 = (self.vqc_s2.n_qubits, self.vqc_s2.n_layers)
        if shape_1 != shape_2:
            raise ParameterError(f'VQC shapes differ: {shape_1} vs {shape_2}.')

    @classmethod
    def initialize(cls, n, n_layers, generator=None):
        return cls(
            VqcParams.initialize(n, n_layers, generator),
            VqcParams.initialize(n, n_layers, generator),
        )

    @property
    def shape(self):
        return self.vqc_s1.n_qubits, self.vqc_s1.n_layers

    def tensors(self):
        return self.vqc_s1.tensors() + self.vqc_s2.tensors()

    @classmethod
    def from_tensors(cls, tensors):
        return cls(VqcParams.from_tensors(tensors[:4]), VqcParams.from_tensors(tensors[4:]))

    def detach(self):
        return DenoiserParams(self.vqc_s1.detach(), self.vqc_s2.detach())

    def requires_grad_(self):
        self.vqc_s1.requires_grad_()
        self.vqc_s2.requires_grad_()
        return self

    def is_finite(self):
        return self.vqc_s1.is_finite() and self.vqc_s2.is_finite()

    def to_dict(self):
        return {'vqc_s1': self.vqc_s1.to_dict(), 'vqc_s2': self.vqc_s2.to_dict()}

    @classmethod
    def from_dict(cls, payload):
        return cls(VqcParams.from_dict(payload['vqc_s1']), VqcParams.from_dict(payload['vqc_s2']))


def embed(l):
    """``r_i = pi * tanh(|l_i|^2)``."""
    return math.pi * torch.tanh(l.real ** 2 + l.imag ** 2)


def _matvec(matrix, vector):
    return (matrix @ vector.unsqueeze(-1)).squeeze(-1)


def prep_angle(y, A, x_hat):
    """State-preparation angle ``pi * tanh(||y - A x_hat||^2 / N)``."""
    residual = y - _matvec(A, x_hat)
    energy = (residual.real ** 2 + residual.imag ** 2).sum(-1)
    return math.pi * torch.tanh(energy / x_hat.shape[-1])


# Circuit templates -----------------------------------------------------------

def weight_index(i, j, n):
    return i * n + j


def angle_index(bank, i, layer, n, n_layers):
    return n * n + bank * n * n_layers + i * n_layers + layer


def circuit_inputs(r, v2):
    """Data vector ``[r_1..r_N, v2]`` matching ``build_qubit_circuit``."""
    r = torch.as_tensor(r, dtype=REAL)
    return torch.cat([r, torch.as_tensor(v2, dtype=REAL).reshape(1)])


def build_qubit_circuit(i, params, prep_each_layer=True):
    """Explicit gate list of qubit ``i`` (zero-based) bound to ``params.flatten()``."""
    n, n_layers = params.n_qubits, params.n_layers
    if not 0 <= i < n:
        raise ParameterError(f'qubit index {i} out of range for {n} qubits.')
    circuit = quantum.QubitCircuit()
    for layer in range(n_layers):
        if prep_each_layer or layer == 0:
            circuit.add(Axis.X, quantum.DataAngle(n))
        for j in range(n):
            circuit.add(Axis.Y, quantum.WeightedDataAngle(j, weight_index(i, j, n)))
        for bank, axis in enumerate((Axis.Z, Axis.Y, Axis.Z)):
            circuit.add(axis, quantum.ParamAngle(angle_index(bank, i, layer, n, n_layers)))
    return circuit


# Batched measurement kernel ----------------------------------------------------

def _layer_angles(r, v2, weights, angles_a, angles_b, angles_c, prep_each_layer):
    """
    Gate angles of every qubit, shape ``batch + (N, G)``, and their axes.

    The fused data angle is ``phi_i = sum_j r_j w_ij``.
    """
    phi = torch.einsum('...j,ij->...i', r, weights)
    prep = v2.unsqueeze(-1).expand_as(phi)
    columns, axes = [], []
    for layer in range(angles_a.shape[1]):
        if prep_each_layer or layer == 0:
            columns.append(prep)
            axes.append(Axis.X)
        columns.append(phi)
        axes.append(Axis.Y)
        for bank, axis in zip((angles_a, angles_b, angles_c), (Axis.Z, Axis.Y, Axis.Z)):
            columns.append(bank[:, layer].expand_as(phi))
            axes.append(axis)
    return torch.stack(columns, dim=-1), tuple(axes)


def _measure(angles, axes):
    amps = quantum.ground_state(*angles.shape[:-1])
    for g, axis in enumerate(axes):
        amps = quantum.evolve(amps, quantum.rotation_matrix(axis, angles[..., g]))
    return quantum.z_expectation(amps)


class _ParameterShiftMeasurement(torch.autograd.Function):
    """Z expectations whose backward pass uses gate-level ±π/2 shifts."""

    @staticmethod
    def forward(ctx, r, v2, weights, angles_a, angles_b, angles_c, prep_each_layer):
        angles, axes = _layer_angles(r, v2, weights, angles_a, angles_b, angles_c, prep_each_layer)
        ctx.save_for_backward(r, weights, angles)
        ctx.axes = axes
        ctx.n_layers = angles_a.shape[1]
        ctx.batch_shape = v2.shape
        return _measure(angles, axes)

    @staticmethod
    def backward(ctx, grad_out):
        r, weights, angles = ctx.saved_tensors
        axes = ctx.axes
        shifts = []
        for g in range(len(axes)):
            plus = angles.clone()
            minus = angles.clone()
            plus[..., g] += quantum.SHIFT
            minus[..., g] -= quantum.SHIFT
            shifts.append((_measure(plus, axes) - _measure(minus, axes)) / 2)
        # dm_i / d(angle of gate g), weighted by the incoming gradient
        weighted = torch.stack(shifts, dim=-1) * grad_out.unsqueeze(-1)

        grad_v2 = torch.zeros(ctx.batch_shape, dtype=REAL)
        grad_phi = torch.zeros_like(grad_out)
        n = weights.shape[0]
        grad_banks = [torch.zeros(n, ctx.n_layers, dtype=REAL) for _ in range(3)]
        batch_dims = tuple(range(weighted.dim() - 2))
        g = 0
        for layer in range(ctx.n_layers):
            if axes[g] is Axis.X:
                grad_v2 = grad_v2 + weighted[..., g].sum(-1)
                g += 1
            grad_phi = grad_phi + weighted[..., g]
            g += 1
            for bank in range(3):
                column = weighted[..., g]
                grad_banks[bank][:, layer] = column.sum(batch_dims) if batch_dims else column
                g += 1

        grad_weights = torch.einsum('...i,...j->ij', grad_phi, r)
        grad_r = torch.einsum('...i,ij->...j', grad_phi, weights)
        return grad_r, grad_v2, grad_weights, *grad_banks, None


def measure_expectations(r, v2, params, prep_each_layer=True, gradient_method='autograd'):
    """Pauli-Z expectation of every qubit, shape ``r.shape``."""
    v2 = torch.as_tensor(v2, dtype=REAL)
    if gradient_method == 'parameter_shift':
        return _ParameterShiftMeasurement.apply(r, v2, *params.tensors(), prep_each_layer)
    if gradient_method != 'autograd':
        raise ParameterError(f'unknown gradient method "{gradient_method}".')
    angles, axes = _layer_angles(r, v2, *params.tensors(), prep_each_layer)
    return _measure(angles, axes)


def scaling_factors(r, v2, params, prep_each_layer=True, shots=0, generator=None,
                    gradient_method='autograd'):
    """``s_i = (m_i + 1) / 2`` from the qubit expectations; ``shots>0`` samples them."""
    m = measure_expectations(r, v2, params, prep_each_layer, gradient_method)
    if shots:
        m = quantum.sample_z_expectation(m, shots, generator)
    return (m + 1.0) / 2.0


def denoise(l, s1, s2):
    """``x_hat_i = s1_i / (1 + s2_i) * l_i``."""
    return (s1 / (1.0 + s2)).to(COMPLEX) * l
