import sys
import os

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from analysis.observables import get_observable
from analysis.phase_map import PhaseMap, map_over_grid
from models.vae import SpinVAE
from spinsim.dataset import GridDataset, point_seeds


def training_data_map(
    dataset: GridDataset,
    observable: str,
    k: float = 0.8,
    site: int = 0,
    threads: int = 1,
) -> PhaseMap:
    """The named observable evaluated on the training configurations of every grid point."""
    function = get_observable(observable, k, site)
    return map_over_grid(
        dataset,
        lambda batch, _: function(batch, dataset.periodic),
        f"data_{observable}",
        threads,
    )


def reconstruction_map(
    model: SpinVAE,
    dataset: GridDataset,
    observable: str,
    seed: int = 0,
    k: float = 0.8,
    site: int = 0,
    threads: int = 1,
) -> PhaseMap:
    """
    The named observable on generated configurations, one per input, at every grid point.

    Each input is encoded, one z is drawn, and a configuration is generated
    (ancestral sampling for cpvae, thresholded output for dvae).
    """
    function = get_observable(observable, k, site)
    seeds = point_seeds(seed, len(dataset.records))

    def evaluate(batch: np.ndarray, index: int) -> float:
        generated = model.generate(batch, seed=seeds[index][1])
        return function(generated, dataset.periodic)

    return map_over_grid(dataset, evaluate, f"{model.config.variant.value}_{observable}", threads)
