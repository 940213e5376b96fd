from typing import Iterable, List, Sequence, Tuple

import numpy as np

from autodiff.layers import Layer, LayerSpec, Parameter, Tape, build_layer


class Sequential:
    """
    An ordered stack of layers run forward and then backward in reverse.

    Responsibilities:
        - Chain the layers' forward passes and collect their tapes.
        - Propagate a cotangent back through the stack, accumulating parameter gradients.
        - Expose the specs and parameters of every layer for checkpointing.
    """

    def __init__(self, layers: Sequence[Layer]) -> None:
        self.layers: List[Layer] = list(layers)

    @classmethod
    def from_specs(cls, specs: Iterable[LayerSpec], rng: np.random.Generator) -> "Sequential":
        return cls([build_layer(spec, rng) for spec in specs])

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[Tape]]:
        tapes: List[Tape] = []
        for layer in self.layers:
            x, tape = layer.forward(x)
            tapes.append(tape)
        return x, tapes

    def backward(self, tapes: List[Tape], dy: np.ndarray) -> np.ndarray:
        for layer, tape in zip(reversed(self.layers), reversed(tapes)):
            dy = layer.backward(tape, dy)
        return dy

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]


def zero_grad(parameters: Iterable[Parameter]) -> None:
    for parameter in parameters:
        parameter.zero_grad()


def set_all(parameters: Iterable[Parameter], value: float) -> None:
    """Overwrites every parameter with a constant (used for zero-weight models)."""
    for parameter in parameters:
        parameter.value[...] = value
