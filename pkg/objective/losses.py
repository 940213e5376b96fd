"""
Pointwise loss terms and their gradients.

Each loss accepts a single sequence or a batch; batched inputs return one
value per row.
"""

from typing import Tuple

import numpy as np

from utils.exceptions import ValidationError

PROBABILITY_FLOOR: float = 1e-7


def _matching(a: np.ndarray, x: np.ndarray, what: str) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.shape != x.shape:
        raise ValidationError(f"{what}: shape {a.shape} does not match configurations {x.shape}")
    return a, x


def bernoulli_nll(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    -sum_i [b_i log p_i + (1 - b_i) log(1 - p_i)] with b_i = (1 + x_i) / 2.

    p is clamped to [1e-7, 1 - 1e-7] first.
    """
    p, x = _matching(p, x, "bernoulli_nll")
    p = np.clip(p, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    b = 0.5 * (1.0 + x)
    return -(b * np.log(p) + (1.0 - b) * np.log1p(-p)).sum(axis=-1)


def bernoulli_nll_grad(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d bernoulli_nll / d p; zero where the clamp is active."""
    p, x = _matching(p, x, "bernoulli_nll_grad")
    inside = (p > PROBABILITY_FLOOR) & (p < 1.0 - PROBABILITY_FLOOR)
    p = np.clip(p, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    b = 0.5 * (1.0 + x)
    return np.where(inside, -b / p + (1.0 - b) / (1.0 - p), 0.0)


def mse_loss(reconstruction: np.ndarray, x: np.ndarray) -> np.ndarray:
    r, x = _matching(reconstruction, x, "mse_loss")
    return ((r - x) ** 2).mean(axis=-1)


def mse_loss_grad(reconstruction: np.ndarray, x: np.ndarray) -> np.ndarray:
    r, x = _matching(reconstruction, x, "mse_loss_grad")
    return 2.0 * (r - x) / x.shape[-1]


def gaussian_kl_per_dimension(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """KL(N(mu, sigma^2) || N(0, 1)) per dimension: (mu^2 + sigma^2 - log sigma^2 - 1) / 2."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    return 0.5 * (mu**2 + np.exp(log_var) - log_var - 1.0)
