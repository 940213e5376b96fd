import sys
import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.layers import Parameter
from utils.exceptions import NumericalDivergenceError, ValidationError

BETA1: float = 0.9
BETA2: float = 0.999
EPSILON: float = 1e-16


@dataclass
class MomentState:
    """First moment m and belief second moment s of one parameter."""

    m: np.ndarray
    s: np.ndarray


def adabelief_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: MomentState,
    lr: float,
    step_index: int,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPSILON,
) -> Tuple[np.ndarray, MomentState]:
    """
    One AdaBelief update of a single parameter array.

    m <- b1 m + (1 - b1) g
    s <- b2 s + (1 - b2) (g - m)^2 + eps
    theta <- theta - lr * m_hat / (sqrt(s_hat) + eps), with bias-corrected m_hat, s_hat.

    Args:
        theta (np.ndarray): Current parameter values.
        grad (np.ndarray): Gradient of the loss.
        state (MomentState): Moments from the previous step.
        lr (float): Learning rate.
        step_index (int): 1-based step counter for bias correction.

    Returns:
        Tuple[np.ndarray, MomentState]: Updated parameters and moments.

    Raises:
        ValidationError: On shape mismatch or step_index < 1.
    """
    if grad.shape != theta.shape or state.m.shape != theta.shape:
        raise ValidationError(f"shape mismatch: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}")
    if step_index < 1:
        raise ValidationError("step_index starts at 1")
    m = beta1 * state.m + (1.0 - beta1) * grad
    s = beta2 * state.s + (1.0 - beta2) * (grad - m) ** 2 + eps
    m_hat = m / (1.0 - beta1**step_index)
    s_hat = s / (1.0 - beta2**step_index)
    return theta - lr * m_hat / (np.sqrt(s_hat) + eps), MomentState(m, s)


@dataclass
class AdaBelief:
    """In-place AdaBelief over a list of `Parameter`s."""

    parameters: List[Parameter]
    lr: float = 1e-3
    step_count: int = 0
    state: Dict[str, MomentState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValidationError("learning rate must be non-negative")
        for p in self.parameters:
            self.state[p.name] = MomentState(np.zeros_like(p.value), np.zeros_like(p.value))

    def step(self) -> None:
        self.step_count += 1
        for p in self.parameters:
            updated, self.state[p.name] = adabelief_step(
                p.value, p.grad, self.state[p.name], self.lr, self.step_count
            )
            if not np.all(np.isfinite(updated)):
                raise NumericalDivergenceError(self.step_count)
            p.value[...] = updated
