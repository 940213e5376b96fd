import sys
import os
from typing import List, Union

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from models.vae import SpinVAE
from spinsim.dataset import GridDataset
from utils.logger import logging

logger = logging.getLogger(__name__)

ACTIVE_THRESHOLD: float = 0.5


def _configurations(data: Union[GridDataset, np.ndarray]) -> np.ndarray:
    if isinstance(data, GridDataset):
        return data.configurations()
    return np.asarray(data)


def mean_sigma(model: SpinVAE, data: Union[GridDataset, np.ndarray], batch_size: int = 4096) -> np.ndarray:
    """Encoder standard deviation per latent dimension, averaged over the data."""
    x = _configurations(data)
    total = np.zeros(model.latent_dim)
    for start in range(0, len(x), batch_size):
        total += model.encode(x[start : start + batch_size]).sigma.sum(axis=0)
    return total / len(x)


def active_latent_neurons(
    model: SpinVAE,
    data: Union[GridDataset, np.ndarray],
    threshold: float = ACTIVE_THRESHOLD,
) -> List[int]:
    """Dimensions whose mean sigma stays below `threshold`; the rest follow the prior."""
    sigma = mean_sigma(model, data)
    active = [int(i) for i in np.flatnonzero(sigma < threshold)]
    logger.info(f"mean sigma per dimension {np.round(sigma, 4).tolist()}; active {active}")
    return active
