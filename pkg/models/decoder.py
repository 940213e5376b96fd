from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from autodiff.layers import Layer, LayerKind, LayerSpec, MaskedDense, Parameter, Tape, build_layer
from models.config import ModelConfig


class DecoderTape(NamedTuple):
    dense: List[Tape]
    activations: List[Tape]


def shift_right(x: np.ndarray) -> np.ndarray:
    """(x_0, ..., x_{N-1}) -> (0, x_0, ..., x_{N-2}) along the last axis."""
    shifted = np.zeros_like(x, dtype=np.float64)
    shifted[:, 1:] = x[:, :-1]
    return shifted


class _ConditionedStack:
    """
    Masked dense layers that each receive the latent vector as extra inputs.

    Layer l consumes [z, h_{l-1}] and produces h_l; context columns are never
    masked, so every unit sees the whole latent vector.
    """

    def __init__(self, specs: List[LayerSpec], activations: List[LayerSpec], rng: np.random.Generator) -> None:
        self.dense: List[MaskedDense] = [build_layer(spec, rng) for spec in specs]
        self.activations: List[Layer] = [build_layer(spec, rng) for spec in activations]

    def forward(self, z: np.ndarray, h: Optional[np.ndarray]) -> Tuple[np.ndarray, DecoderTape]:
        dense_tapes, activation_tapes = [], []
        for dense, activation in zip(self.dense, self.activations):
            inputs = z if h is None else np.concatenate([z, h], axis=1)
            pre, tape = dense.forward(inputs)
            h, act_tape = activation.forward(pre)
            dense_tapes.append(tape)
            activation_tapes.append(act_tape)
        return h, DecoderTape(dense_tapes, activation_tapes)

    def backward(self, tape: DecoderTape, dy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        d_latent = self.dense[0].spec.context_features
        dz = np.zeros((dy.shape[0], d_latent))
        for dense, activation, dense_tape, act_tape in zip(
            reversed(self.dense),
            reversed(self.activations),
            reversed(tape.dense),
            reversed(tape.activations),
        ):
            d_pre = activation.backward(act_tape, dy)
            d_inputs = dense.backward(dense_tape, d_pre)
            dz += d_inputs[:, :d_latent]
            dy = d_inputs[:, d_latent:]
        return dz, dy

    def parameters(self) -> List[Parameter]:
        return [p for dense in self.dense for p in dense.parameters()]

    def specs(self) -> List[LayerSpec]:
        specs = []
        for dense, activation in zip(self.dense, self.activations):
            specs.extend([dense.spec, activation.spec])
        return specs


def _stack_specs(config: ModelConfig, masked: bool, output_kind: LayerKind) -> Tuple[List[LayerSpec], List[LayerSpec]]:
    n, d, width = config.n_sites, config.latent_dim, config.decoder_width
    first_in = n if masked else 0
    widths = [first_in] + [width] * config.decoder_hidden_layers + [n]
    dense, activations = [], []
    for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        last = index == len(widths) - 2
        dense.append(
            LayerSpec(
                kind=LayerKind.MASKED_DENSE,
                name=f"decoder.layer{index}",
                in_features=fan_in,
                out_features=fan_out,
                context_features=d,
                n_sites=n,
                exclusive=False,
                masked=masked,
            )
        )
        activations.append(LayerSpec(kind=output_kind if last else LayerKind.SELU))
    return dense, activations


class AutoregressiveDecoder(_ConditionedStack):
    """
    Conditional probabilities p_i = p(x_i = +1 | x_<i, z) for a batch.

    The input is the right-shifted configuration, and every mask is inclusive
    over shifted positions, so p_i depends on z and x_0..x_{i-1} only.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        dense, activations = _stack_specs(config, masked=True, output_kind=LayerKind.SIGMOID)
        super().__init__(dense, activations, rng)

    def forward(self, z: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, DecoderTape]:
        return super().forward(z, shift_right(x))

    def backward(self, tape: DecoderTape, dp: np.ndarray) -> np.ndarray:
        dz, _ = super().backward(tape, dp)
        return dz


class DeterministicDecoder(_ConditionedStack):
    """Unmasked stack on z alone with a tanh output in [-1, 1]."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        dense, activations = _stack_specs(config, masked=False, output_kind=LayerKind.TANH)
        super().__init__(dense, activations, rng)

    def forward(self, z: np.ndarray) -> Tuple[np.ndarray, DecoderTape]:
        return super().forward(z, None)

    def backward(self, tape: DecoderTape, dr: np.ndarray) -> np.ndarray:
        dz, _ = super().backward(tape, dr)
        return dz
