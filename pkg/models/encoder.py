from typing import List, NamedTuple, Tuple

import numpy as np

from autodiff.layers import LayerKind, LayerSpec, Parameter, Tape
from autodiff.network import Sequential
from models.config import ModelConfig


class EncoderTape(NamedTuple):
    trunk: List[Tape]
    mean: List[Tape]
    log_var: List[Tape]


def encoder_specs(config: ModelConfig) -> Tuple[List[LayerSpec], List[LayerSpec], List[LayerSpec]]:
    """Layer specs of the trunk, the mean head and the log-variance head."""
    c, k = config.conv_channels, config.kernel_size
    trunk = [
        LayerSpec(kind=LayerKind.CIRCULAR_CONV1D, name="encoder.conv1", kernel_size=k, in_channels=1, out_channels=c),
        LayerSpec(kind=LayerKind.RELU),
        LayerSpec(kind=LayerKind.CIRCULAR_CONV1D, name="encoder.conv2", kernel_size=k, in_channels=c, out_channels=c),
        LayerSpec(kind=LayerKind.RELU),
        LayerSpec(kind=LayerKind.GLOBAL_AVERAGE_POOL),
    ]

    def head(name: str) -> List[LayerSpec]:
        return [
            LayerSpec(kind=LayerKind.DENSE, name=f"encoder.{name}.hidden", in_features=c, out_features=config.head_width),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(kind=LayerKind.DENSE, name=f"encoder.{name}.out", in_features=config.head_width, out_features=config.latent_dim),
        ]

    return trunk, head("mean"), head("log_var")


class Encoder:
    """
    Maps a batch of configurations (B, N) to latent means and log-variances (B, d).

    Circular convolutions followed by global average pooling make the output
    invariant under cyclic shifts of the input.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        trunk, mean, log_var = encoder_specs(config)
        self.trunk = Sequential.from_specs(trunk, rng)
        self.mean_head = Sequential.from_specs(mean, rng)
        self.log_var_head = Sequential.from_specs(log_var, rng)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, EncoderTape]:
        features, trunk_tapes = self.trunk.forward(x[:, :, None])
        mu, mean_tapes = self.mean_head.forward(features)
        log_var, log_var_tapes = self.log_var_head.forward(features)
        return mu, log_var, EncoderTape(trunk_tapes, mean_tapes, log_var_tapes)

    def backward(self, tape: EncoderTape, d_mu: np.ndarray, d_log_var: np.ndarray) -> np.ndarray:
        d_features = self.mean_head.backward(tape.mean, d_mu)
        d_features = d_features + self.log_var_head.backward(tape.log_var, d_log_var)
        return self.trunk.backward(tape.trunk, d_features)[:, :, 0]

    def parameters(self) -> List[Parameter]:
        return self.trunk.parameters() + self.mean_head.parameters() + self.log_var_head.parameters()

    def specs(self) -> List[LayerSpec]:
        return self.trunk.specs() + self.mean_head.specs() + self.log_var_head.specs()
