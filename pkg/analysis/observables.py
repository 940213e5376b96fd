"""
Observables of batches of +1/-1 spin configurations, shape (S, N).
"""

import sys
import os
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np
from scipy.stats import entropy
from sklearn.linear_model import LinearRegression

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.exceptions import ValidationError

BETA_TOLERANCE: float = 1e-9
MIN_FIT_POINTS: int = 3


def _batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValidationError("expected a non-empty batch of configurations")
    return batch


def magnetization(batch: np.ndarray, absolute: bool = True) -> float:
    """Mean of the per-shot magnetization (1/N) sum_i x_i, or of its absolute value."""
    per_shot = _batch(batch).mean(axis=1)
    return float(np.abs(per_shot).mean() if absolute else per_shot.mean())


def two_point_correlator(batch: np.ndarray, distance: int, periodic: bool) -> float:
    """<x_i x_{i+d}> averaged over samples and sites; open chains use valid pairs only."""
    batch = _batch(batch)
    n = batch.shape[1]
    if not 1 <= distance < n:
        raise ValidationError(f"distance {distance} outside [1, {n - 1}]")
    if periodic:
        return float((batch * np.roll(batch, -distance, axis=1)).mean())
    return float((batch[:, :-distance] * batch[:, distance:]).mean())


def correlation_function(batch: np.ndarray, periodic: bool = False) -> np.ndarray:
    """C(r) for r = 1..N//2."""
    batch = _batch(batch)
    return np.array(
        [two_point_correlator(batch, r, periodic) for r in range(1, batch.shape[1] // 2 + 1)]
    )


@dataclass
class BetaFit:
    beta: float
    intercept: float
    degenerate: bool


def fit_power_law(distances: np.ndarray, correlations: np.ndarray, tol: float = BETA_TOLERANCE) -> BetaFit:
    """
    Least-squares fit of log C(r) = -beta log r + c over the points with C(r) > 0.

    Fewer than 3 positive points, or a fitted beta below -tol, give beta = 0
    with `degenerate` set.
    """
    distances = np.asarray(distances, dtype=np.float64)
    correlations = np.asarray(correlations, dtype=np.float64)
    positive = correlations > 0
    if positive.sum() < MIN_FIT_POINTS:
        return BetaFit(0.0, 0.0, True)
    regression = LinearRegression().fit(
        np.log(distances[positive])[:, None], np.log(correlations[positive])
    )
    beta = -float(regression.coef_[0])
    if beta < -tol:
        return BetaFit(0.0, 0.0, True)
    return BetaFit(max(beta, 0.0), float(regression.intercept_), False)


def correlation_exponent_beta(batch: np.ndarray, periodic: bool = False) -> BetaFit:
    correlations = correlation_function(batch, periodic)
    return fit_power_law(np.arange(1, correlations.size + 1), correlations)


def structure_factor(batch: np.ndarray, k: float, site: int = 0) -> float:
    """S(k, i) = (1/N) sum_j cos(2 pi k |j - i| / N) <x_j x_i>; the j = i term is 1."""
    batch = _batch(batch)
    n = batch.shape[1]
    if not 0 <= site < n:
        raise ValidationError(f"site {site} outside [0, {n - 1}]")
    correlators = (batch * batch[:, [site]]).mean(axis=0)
    distance = np.abs(np.arange(n) - site)
    return float((np.cos(2.0 * np.pi * k * distance / n) * correlators).sum() / n)


def spectral_entropy(x: np.ndarray) -> np.ndarray:
    """
    Shannon entropy (natural log) of the normalized DFT power spectrum.

    Returns one value per configuration; a single configuration gives a 0-d array.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValidationError("spectral entropy needs at least 2 sites")
    power = np.abs(np.fft.fft(x, axis=-1)) ** 2
    return entropy(power, axis=-1)


ObservableFunction = Callable[[np.ndarray, bool], float]


def _registry(k: float = 0.8, site: int = 0) -> Dict[str, ObservableFunction]:
    return {
        "magnetization": lambda batch, periodic: magnetization(batch, absolute=True),
        "magnetization_signed": lambda batch, periodic: magnetization(batch, absolute=False),
        "zz1": lambda batch, periodic: two_point_correlator(batch, 1, periodic),
        "zz2": lambda batch, periodic: two_point_correlator(batch, 2, periodic),
        "beta": lambda batch, periodic: correlation_exponent_beta(batch, periodic).beta,
        "structure_factor": lambda batch, periodic: structure_factor(batch, k, site),
        "spectral_entropy": lambda batch, periodic: float(np.mean(spectral_entropy(batch))),
    }


OBSERVABLE_NAMES = tuple(_registry())


def get_observable(name: str, k: float = 0.8, site: int = 0) -> ObservableFunction:
    """
    Looks up a named batch observable.

    Raises:
        ValidationError: If the name is unknown; the message lists the valid names.
    """
    registry = _registry(k, site)
    if name not in registry:
        raise ValidationError(f"unknown observable {name!r}; valid: {', '.join(OBSERVABLE_NAMES)}")
    return registry[name]
