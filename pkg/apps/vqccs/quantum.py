"""
Exact single-qubit rotation circuits.

The ansatz used by the denoiser has no entangling gate, so every qubit evolves
as an independent 2-vector: a circuit is a chain of 2x2 rotations applied to
``|0>`` and read out with the Pauli-Z expectation ``|q0|^2 - |q1|^2``.
Tensors are complex128; leading batch dimensions broadcast through
``rotation_matrix``, ``evolve`` and ``z_expectation``.
"""
import cmath
import json
import math
from dataclasses import dataclass
from enum import Enum

import torch

from .exceptions import ConfigurationError, UnsupportedBindingError

REAL = torch.float64
COMPLEX = torch.complex128

SHIFT = math.pi / 2


class Axis(str, Enum):
    X = 'X'
    Y = 'Y'
    Z = 'Z'


def rotation_matrix(axis, angle):
    """
    Rotation ``R_axis(angle)`` with the half-angle convention.

    ``angle`` may be a float or a real tensor of any shape; the result has
    shape ``angle.shape + (2, 2)``.
    """
    axis = Axis(axis)
    angle = torch.as_tensor(angle, dtype=REAL)
    half = angle / 2
    if axis is Axis.Z:
        zero = torch.zeros_like(half, dtype=COMPLEX)
        rows = [
            torch.stack([torch.exp(-1j * half), zero], dim=-1),
            torch.stack([zero, torch.exp(1j * half)], dim=-1),
        ]
        return torch.stack(rows, dim=-2)

    cos = torch.cos(half).to(COMPLEX)
    sin = torch.sin(half).to(COMPLEX)
    if axis is Axis.X:
        rows = [
            torch.stack([cos, -1j * sin], dim=-1),
            torch.stack([-1j * sin, cos], dim=-1),
        ]
    else:
        rows = [
            torch.stack([cos, -sin], dim=-1),
            torch.stack([sin, cos], dim=-1),
        ]
    return torch.stack(rows, dim=-2)


def ground_state(*batch_shape):
    """Amplitudes of ``|0>`` with the given batch shape."""
    amps = torch.zeros(*batch_shape, 2, dtype=COMPLEX)
    amps[..., 0] = 1.0
    return amps


def evolve(amps, matrix):
    """Apply (batched) 2x2 ``matrix`` to (batched) amplitudes."""
    return torch.einsum('...ij,...j->...i', matrix, amps)


def z_expectation(amps):
    """Pauli-Z expectation, clamped onto [-1, 1]."""
    probs = amps.real ** 2 + amps.imag ** 2
    return torch.clamp(probs[..., 0] - probs[..., 1], -1.0, 1.0)


def sample_z_expectation(expectation, shots, generator=None):
    """Finite-shot estimate of a Z expectation from Bernoulli outcomes on ``|0>``."""
    p0 = ((expectation.detach() + 1.0) / 2.0).clamp(0.0, 1.0)
    counts = torch.binomial(torch.full_like(p0, float(shots)), p0, generator=generator)
    return 2.0 * counts / shots - 1.0


@dataclass(frozen=True)
class QubitState:
    """Pure single-qubit state ``amp0|0> + amp1|1>``."""
    amp0: complex = 1.0 + 0.0j
    amp1: complex = 0.0j

    @classmethod
    def zero(cls):
        return cls(1.0 + 0.0j, 0.0j)

    @classmethod
    def from_bloch(cls, theta, phi):
        """State at latitude ``theta`` and longitude ``phi`` of the Bloch sphere."""
        return cls(complex(math.cos(theta / 2)), cmath.exp(1j * phi) * math.sin(theta / 2))

    @classmethod
    def from_tensor(cls, amps):
        return cls(complex(amps[0].item()), complex(amps[1].item()))

    def bloch_angles(self):
        """Return ``(theta, phi)`` after removing the global phase of ``amp0``."""
        phase = cmath.phase(self.amp0) if abs(self.amp0) > 0 else 0.0
        amp1 = self.amp1 * cmath.exp(-1j * phase)
        theta = 2 * math.atan2(abs(amp1), abs(self.amp0))
        phi = cmath.phase(amp1) % (2 * math.pi) if abs(amp1) > 0 else 0.0
        return theta, phi

    def norm(self):
        return math.sqrt(abs(self.amp0) ** 2 + abs(self.amp1) ** 2)

    def as_tensor(self):
        return torch.tensor([self.amp0, self.amp1], dtype=COMPLEX)


@dataclass(frozen=True)
class RotationGate:
    axis: Axis
    angle: float

    def matrix(self):
        return rotation_matrix(self.axis, self.angle)


def apply(state, gate):
    """Apply ``gate`` to ``state``."""
    return QubitState.from_tensor(evolve(state.as_tensor(), gate.matrix()))


def expect_z(state):
    """Pauli-Z expectation of ``state``, in [-1, 1]."""
    value = abs(state.amp0) ** 2 - abs(state.amp1) ** 2
    return min(1.0, max(-1.0, value))


# Angle bindings -------------------------------------------------------------

@dataclass(frozen=True)
class FixedAngle:
    value: float

    def resolve(self, params, data):
        return self.value

    def param_factor(self, param_index, params, data):
        return 0.0

    def to_dict(self):
        return {'kind': 'fixed', 'value': self.value}


@dataclass(frozen=True)
class ParamAngle:
    index: int

    def resolve(self, params, data):
        return params[self.index]

    def param_factor(self, param_index, params, data):
        return 1.0 if param_index == self.index else 0.0

    def to_dict(self):
        return {'kind': 'param', 'index': self.index}


@dataclass(frozen=True)
class DataAngle:
    """Angle equal to one data input."""
    data_index: int

    def resolve(self, params, data):
        return data[self.data_index]

    def param_factor(self, param_index, params, data):
        return 0.0

    def to_dict(self):
        return {'kind': 'data', 'data_index': self.data_index}


@dataclass(frozen=True)
class WeightedDataAngle:
    """Angle ``data[data_index] * params[weight_index]``."""
    data_index: int
    weight_index: int

    def resolve(self, params, data):
        return data[self.data_index] * params[self.weight_index]

    def param_factor(self, param_index, params, data):
        return float(data[self.data_index]) if param_index == self.weight_index else 0.0

    def to_dict(self):
        return {'kind': 'weighted', 'data_index': self.data_index, 'weight_index': self.weight_index}


_BINDINGS = {
    'fixed': lambda d: FixedAngle(d['value']),
    'param': lambda d: ParamAngle(d['index']),
    'data': lambda d: DataAngle(d['data_index']),
    'weighted': lambda d: WeightedDataAngle(d['data_index'], d['weight_index']),
}


@dataclass(frozen=True)
class BoundGate:
    axis: Axis
    binding: object

    def to_dict(self):
        return {'axis': self.axis.value, **self.binding.to_dict()}


class QubitCircuit:
    """
    Ordered gate list for one qubit.

    Gates are listed in application order: the first gate acts first on
    ``|0>`` (the rightmost operator of the product notation).
    """

    def __init__(self, gates=()):
        self.gates = list(gates)

    def __len__(self):
        return len(self.gates)

    def add(self, axis, binding):
        self.gates.append(BoundGate(Axis(axis), binding))
        return self

    def angles(self, params, data):
        """Resolve every gate angle; unresolved bindings raise ``ConfigurationError``."""
        angles = []
        for position, gate in enumerate(self.gates):
            try:
                angles.append(gate.binding.resolve(params, data))
            except IndexError as exc:
                raise ConfigurationError(
                    f'Gate {position} ({gate.to_dict()}) cannot be resolved against '
                    f'{len(params)} parameters and {len(data)} data inputs.'
                ) from exc
        return angles

    def param_indices(self):
        indices = set()
        for gate in self.gates:
            if isinstance(gate.binding, ParamAngle):
                indices.add(gate.binding.index)
            elif isinstance(gate.binding, WeightedDataAngle):
                indices.add(gate.binding.weight_index)
        return indices

    def to_text(self):
        return json.dumps([gate.to_dict() for gate in self.gates])

    @classmethod
    def from_text(cls, text):
        circuit = cls()
        for entry in json.loads(text):
            circuit.add(entry['axis'], _BINDINGS[entry['kind']](entry))
        return circuit


def _evaluate_angles(circuit, angles):
    amps = ground_state()
    for gate, angle in zip(circuit.gates, angles):
        amps = evolve(amps, rotation_matrix(gate.axis, angle))
    return z_expectation(amps)


def run_circuit(circuit, params, data, shots=0, generator=None):
    """
    Pauli-Z expectation of ``circuit`` started in ``|0>``.

    ``shots=0`` returns the exact expectation; otherwise a finite-shot estimate.
    """
    params = torch.as_tensor(params, dtype=REAL)
    data = torch.as_tensor(data, dtype=REAL)
    value = _evaluate_angles(circuit, circuit.angles(params, data))
    if shots:
        value = sample_z_expectation(value, shots, generator)
    return float(value)


def param_shift_grad(circuit, params, data, param_index):
    """
    Derivative of the expectation with respect to ``params[param_index]``.

    Every gate whose angle depends on the parameter is shifted by ±π/2 in
    turn; each difference is weighted by the angle's derivative (the data
    factor for weighted bindings) and the contributions are summed.
    """
    params = torch.as_tensor(params, dtype=REAL)
    data = torch.as_tensor(data, dtype=REAL)
    if param_index not in circuit.param_indices():
        raise UnsupportedBindingError(
            f'Parameter {param_index} is not bound to any rotation angle of the circuit.'
        )
    angles = [float(a) for a in circuit.angles(params, data)]
    gradient = 0.0
    for position, gate in enumerate(circuit.gates):
        factor = gate.binding.param_factor(param_index, params, data)
        if factor == 0.0:
            continue
        plus = list(angles)
        minus = list(angles)
        plus[position] += SHIFT
        minus[position] -= SHIFT
        difference = float(_evaluate_angles(circuit, plus)) - float(_evaluate_angles(circuit, minus))
        gradient += factor * difference / 2.0
    return gradient


def circuit_gradient(circuit, params, data):
    """Analytic gradient of the expectation with respect to every parameter (autograd)."""
    params = torch.as_tensor(params, dtype=REAL).clone().requires_grad_(True)
    data = torch.as_tensor(data, dtype=REAL)
    value = _evaluate_angles(circuit, circuit.angles(params, data))
    (gradient,) = torch.autograd.grad(value, params, allow_unused=True)
    if gradient is None:
        return torch.zeros_like(params).detach()
    return gradient.detach()
