import sys
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from analysis.observables import correlation_exponent_beta, magnetization, spectral_entropy, two_point_correlator
from analysis.phase_map import PhaseMap
from models.vae import SpinVAE
from spinsim.dataset import GridDataset
from utils.exceptions import ValidationError
from utils.logger import logging

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "dimension",
    "z_value",
    "dimension2",
    "z2_value",
    "magnetization",
    "beta",
    "beta_degenerate",
    "nn_correlator",
    "passive",
]


def latent_phase_map(
    model: SpinVAE,
    dataset: GridDataset,
    dimensions: Optional[Sequence[int]] = None,
) -> Dict[str, PhaseMap]:
    """
    Grid-point averages of the encoder outputs.

    Returns three maps per requested dimension i, keyed mu_i, abs_mu_i and sigma_i.
    """
    dimensions = list(range(model.latent_dim)) if dimensions is None else list(dimensions)
    for i in dimensions:
        if not 0 <= i < model.latent_dim:
            raise ValidationError(f"latent dimension {i} outside [0, {model.latent_dim - 1}]")

    shape = dataset.shape + (model.latent_dim,)
    mu, abs_mu, sigma = np.empty(shape), np.empty(shape), np.empty(shape)
    for index, batch in enumerate(dataset.records.values()):
        stats = model.encode(batch)
        cell = np.unravel_index(index, dataset.shape)
        mu[cell] = stats.mu.mean(axis=0)
        abs_mu[cell] = np.abs(stats.mu).mean(axis=0)
        sigma[cell] = stats.sigma.mean(axis=0)

    maps: Dict[str, PhaseMap] = {}
    for i in dimensions:
        for name, values in (("mu", mu), ("abs_mu", abs_mu), ("sigma", sigma)):
            label = f"{name}_{i}"
            maps[label] = PhaseMap(
                dataset.axis1, dataset.axis2, values[..., i], label, dataset.axis1_name, dataset.axis2_name
            )
    return maps


def latent_sweep_generate(
    model: SpinVAE,
    dimension: int,
    values: Sequence[float],
    count: int,
    seed: int,
    second_dimension: Optional[int] = None,
    second_values: Optional[Sequence[float]] = None,
    active_dimensions: Optional[Sequence[int]] = None,
    periodic: bool = False,
) -> pd.DataFrame:
    """
    Generates `count` configurations per latent value with the other dimensions at 0.

    With `second_dimension`, the sweep runs over the product of both value lists.
    A dimension outside `active_dimensions` is swept anyway and flagged passive.

    Returns:
        pd.DataFrame: One row per latent point with magnetization, beta and the
            nearest-neighbour correlator of the generated batch.
    """
    swept = [dimension] if second_dimension is None else [dimension, second_dimension]
    for i in swept:
        if not 0 <= i < model.latent_dim:
            raise ValidationError(f"latent dimension {i} outside [0, {model.latent_dim - 1}]")
    if second_dimension is not None and (second_values is None or second_dimension == dimension):
        raise ValidationError("a 2-D sweep needs a distinct second dimension and its values")

    passive = active_dimensions is not None and any(i not in active_dimensions for i in swept)
    if passive:
        logger.warning(f"sweeping passive latent dimension(s) {swept}; active are {list(active_dimensions)}")

    grid: List[Tuple[float, Optional[float]]] = (
        [(float(v), None) for v in values]
        if second_dimension is None
        else [(float(v), float(w)) for v in values for w in second_values]
    )
    seeds = np.random.SeedSequence(seed).spawn(len(grid))
    rows = []
    for (v, w), child in zip(grid, seeds):
        z = np.zeros(model.latent_dim)
        z[dimension] = v
        if second_dimension is not None:
            z[second_dimension] = w
        batch = model.autoregressive_sample(z, count, seed=int(child.generate_state(1)[0]))
        fit = correlation_exponent_beta(batch, periodic)
        rows.append(
            {
                "dimension": dimension,
                "z_value": v,
                "dimension2": second_dimension if second_dimension is not None else -1,
                "z2_value": w if w is not None else np.nan,
                "magnetization": magnetization(batch, absolute=True),
                "beta": fit.beta,
                "beta_degenerate": fit.degenerate,
                "nn_correlator": two_point_correlator(batch, 1, periodic),
                "passive": passive,
            }
        )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def variance_entropy_relation(
    model: SpinVAE,
    dataset: GridDataset,
    max_per_point: int,
    seed: int = 0,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Encoder log sigma against the spectral entropy of the input configuration.

    Returns:
        Tuple[pd.DataFrame, pd.DataFrame]: Per-configuration table (axis1, axis2,
            spectral_entropy, log_sigma_<i>) and per-dimension least-squares
            slope and intercept of log sigma_i against spectral entropy.
    """
    if max_per_point < 1:
        raise ValidationError("max_per_point must be positive")
    rng = np.random.default_rng(seed)
    frames = []
    for (a, b), batch in dataset.records.items():
        take = min(max_per_point, len(batch))
        chosen = batch[np.sort(rng.choice(len(batch), size=take, replace=False))]
        log_sigma = 0.5 * model.encode(chosen).log_var
        frame = pd.DataFrame(log_sigma, columns=[f"log_sigma_{i}" for i in range(model.latent_dim)])
        frame.insert(0, "spectral_entropy", spectral_entropy(chosen))
        frame.insert(0, "axis2", b)
        frame.insert(0, "axis1", a)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)

    entropy_column = table[["spectral_entropy"]].to_numpy()
    fits = []
    for i in range(model.latent_dim):
        regression = LinearRegression().fit(entropy_column, table[f"log_sigma_{i}"].to_numpy())
        fits.append({"dimension": i, "slope": float(regression.coef_[0]), "intercept": float(regression.intercept_)})
    return table, pd.DataFrame(fits, columns=["dimension", "slope", "intercept"])
