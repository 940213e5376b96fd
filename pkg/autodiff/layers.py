"""
Layer catalog with explicit forward/backward passes.

Every layer maps a float64 array to a float64 array and returns a tape from
`forward` that is sufficient for `backward`. `backward` returns the input
cotangent and adds parameter gradients into `Parameter.grad`.
"""

import os
import sys
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.exceptions import ValidationError

SELU_LAMBDA: float = 1.0507009873554805
SELU_ALPHA: float = 1.6732632423543772


class LayerKind(str, Enum):
    DENSE = "dense"
    MASKED_DENSE = "masked_dense_triangular"
    CIRCULAR_CONV1D = "circular_conv1d"
    RELU = "relu"
    SELU = "selu"
    GLOBAL_AVERAGE_POOL = "global_average_pool"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    EXPONENTIAL = "exponential"


class LayerSpec(BaseModel):
    """Serializable description of one layer; stored in checkpoint manifests."""

    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    name: str = ""
    in_features: int = 0
    out_features: int = 0
    context_features: int = 0
    kernel_size: int = 0
    in_channels: int = 0
    out_channels: int = 0
    n_sites: int = 0
    exclusive: bool = True
    masked: bool = True
    scale: float = 1.0


class Parameter:
    """A trainable array and its accumulated gradient (always the same shape)."""

    def __init__(self, name: str, value: np.ndarray) -> None:
        self.name: str = name
        self.value: np.ndarray = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.value.shape:
            raise ValidationError(
                f"parameter {self.name}: shape {value.shape} != {self.value.shape}"
            )
        self.value[...] = value


class Tape(NamedTuple):
    inputs: np.ndarray
    outputs: np.ndarray


def _uniform_fan_in(rng: np.random.Generator, fan_in: np.ndarray, shape) -> np.ndarray:
    limit = np.sqrt(3.0 / np.maximum(fan_in, 1.0))
    return rng.uniform(-1.0, 1.0, size=shape) * limit


def _check_shape(name: str, array: np.ndarray, expected: Tuple[Optional[int], ...]) -> None:
    if array.ndim != len(expected) or any(
        e is not None and a != e for a, e in zip(array.shape, expected)
    ):
        raise ValidationError(f"{name}: got shape {array.shape}, expected {expected}")


class Layer:
    spec: LayerSpec

    def parameters(self) -> List[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        raise NotImplementedError

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_cotangent(self, tape: Tape, dy: np.ndarray) -> None:
        if dy.shape != tape.outputs.shape:
            raise ValidationError(
                f"{self.spec.kind.value}: cotangent shape {dy.shape} != output shape {tape.outputs.shape}"
            )


class Dense(Layer):
    """y = x @ W + b with x of shape (B, in)."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        fan_in = np.full(spec.out_features, float(spec.in_features))
        self.weight = Parameter(
            f"{spec.name}.weight",
            _uniform_fan_in(rng, fan_in, (spec.in_features, spec.out_features)),
        )
        self.bias = Parameter(f"{spec.name}.bias", np.zeros(spec.out_features))

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def effective_weight(self) -> np.ndarray:
        return self.weight.value

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        _check_shape(self.spec.name, x, (None, self.weight.shape[0]))
        y = x @ self.effective_weight() + self.bias.value
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        self.weight.grad += tape.inputs.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.effective_weight().T


def site_degrees(width: int, n_sites: int) -> np.ndarray:
    """Site index carried by each unit of a layer of `width` units."""
    return (np.arange(width) * n_sites) // width


def triangular_mask(
    in_features: int,
    out_features: int,
    n_sites: int,
    context_features: int = 0,
    exclusive: bool = True,
) -> np.ndarray:
    """
    Site-block triangular mask of shape (context + in, out).

    Output unit u sees input unit v iff deg(v) < deg(u) (exclusive) or
    deg(v) <= deg(u) (inclusive). Context rows are always visible.
    """
    d_in = site_degrees(in_features, n_sites)[:, None]
    d_out = site_degrees(out_features, n_sites)[None, :]
    visible = d_in < d_out if exclusive else d_in <= d_out
    context = np.ones((context_features, out_features), dtype=bool)
    return np.vstack([context, visible]).astype(np.float64)


class MaskedDense(Dense):
    """
    Dense layer whose weight is multiplied by a fixed site-block triangular mask.

    Inputs are the concatenation [context, features]; context columns are
    exempt from the mask. With `masked=False` the mask is all ones, which is
    the unmasked stack used by the deterministic decoder.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        rows = spec.context_features + spec.in_features
        if spec.masked:
            self.mask = triangular_mask(
                spec.in_features,
                spec.out_features,
                spec.n_sites,
                spec.context_features,
                spec.exclusive,
            )
        else:
            self.mask = np.ones((rows, spec.out_features))
        fan_in = self.mask.sum(axis=0)
        self.weight = Parameter(
            f"{spec.name}.weight",
            _uniform_fan_in(rng, fan_in, (rows, spec.out_features)) * self.mask,
        )
        self.bias = Parameter(f"{spec.name}.bias", np.zeros(spec.out_features))

    def effective_weight(self) -> np.ndarray:
        return self.weight.value * self.mask

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        self.weight.grad += (tape.inputs.T @ dy) * self.mask
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.effective_weight().T


class CircularConv1d(Layer):
    """
    1-D convolution with circular padding over (B, N, C_in) -> (B, N, C_out).

    Kernel tap k reads site n + k - kernel_size // 2 (mod N), so output length
    equals input length.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        k, c_in, c_out = spec.kernel_size, spec.in_channels, spec.out_channels
        fan_in = np.full(c_out, float(k * c_in))
        self.weight = Parameter(f"{spec.name}.weight", _uniform_fan_in(rng, fan_in, (k, c_in, c_out)))
        self.bias = Parameter(f"{spec.name}.bias", np.zeros(c_out))

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def _offsets(self) -> range:
        half = self.spec.kernel_size // 2
        return range(-half, self.spec.kernel_size - half)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        _check_shape(self.spec.name, x, (None, None, self.spec.in_channels))
        y = np.zeros(x.shape[:2] + (self.spec.out_channels,))
        for tap, shift in enumerate(self._offsets()):
            y += np.roll(x, -shift, axis=1) @ self.weight.value[tap]
        y += self.bias.value
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        dx = np.zeros_like(tape.inputs)
        for tap, shift in enumerate(self._offsets()):
            shifted = np.roll(tape.inputs, -shift, axis=1)
            self.weight.grad[tap] += np.einsum("bnc,bno->co", shifted, dy)
            dx += np.roll(dy @ self.weight.value[tap].T, shift, axis=1)
        self.bias.grad += dy.sum(axis=(0, 1))
        return dx


class ReLU(Layer):
    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        y = np.maximum(x, 0.0)
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        return dy * (tape.inputs > 0)


class SELU(Layer):
    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        y = SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        x = tape.inputs
        slope = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
        return dy * slope


class Sigmoid(Layer):
    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        y = expit(x)
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        y = tape.outputs
        return dy * y * (1.0 - y)


class Tanh(Layer):
    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        y = np.tanh(x)
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        return dy * (1.0 - tape.outputs**2)


class Exponential(Layer):
    """y = exp(scale * x); scale 0.5 turns a log-variance into a standard deviation."""

    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        y = np.exp(self.spec.scale * x)
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        return dy * self.spec.scale * tape.outputs


class GlobalAveragePool(Layer):
    """Mean over the site axis: (B, N, C) -> (B, C)."""

    def __init__(self, spec: LayerSpec) -> None:
        self.spec = spec

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
        _check_shape(self.spec.name or "pool", x, (None, None, None))
        y = x.mean(axis=1)
        return y, Tape(x, y)

    def backward(self, tape: Tape, dy: np.ndarray) -> np.ndarray:
        self._check_cotangent(tape, dy)
        n = tape.inputs.shape[1]
        return np.broadcast_to(dy[:, None, :] / n, tape.inputs.shape).copy()


def build_layer(spec: LayerSpec, rng: np.random.Generator) -> Layer:
    """Instantiates the layer described by `spec`, drawing weights from `rng`."""
    if spec.kind is LayerKind.DENSE:
        return Dense(spec, rng)
    if spec.kind is LayerKind.MASKED_DENSE:
        return MaskedDense(spec, rng)
    if spec.kind is LayerKind.CIRCULAR_CONV1D:
        return CircularConv1d(spec, rng)
    activations = {
        LayerKind.RELU: ReLU,
        LayerKind.SELU: SELU,
        LayerKind.SIGMOID: Sigmoid,
        LayerKind.TANH: Tanh,
        LayerKind.EXPONENTIAL: Exponential,
        LayerKind.GLOBAL_AVERAGE_POOL: GlobalAveragePool,
    }
    return activations[spec.kind](spec)


def forward(layer: Layer, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
    return layer.forward(np.asarray(x, dtype=np.float64))


def backward(layer: Layer, tape: Tape, dy: np.ndarray) -> np.ndarray:
    return layer.backward(tape, np.asarray(dy, dtype=np.float64))
