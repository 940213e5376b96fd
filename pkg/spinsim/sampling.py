import sys
import os

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from spinsim.lanczos import GroundStateVector
from utils.exceptions import ValidationError

NORM_TOLERANCE: float = 1e-9


def indices_to_spins(indices: np.ndarray, n_sites: int) -> np.ndarray:
    """Decodes basis indices into +1/-1 spin rows (bit k -> site k, bit 1 -> +1)."""
    indices = np.asarray(indices, dtype=np.int64)
    bits = (indices[:, None] >> np.arange(n_sites, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def spins_to_indices(spins: np.ndarray) -> np.ndarray:
    bits = (np.asarray(spins) > 0).astype(np.int64)
    return bits @ (1 << np.arange(bits.shape[1], dtype=np.int64))


def sample_configurations(state: GroundStateVector, count: int, seed: int) -> np.ndarray:
    """
    Draws i.i.d. projective Z-basis measurements from the Born distribution.

    Inverse-CDF sampling over the full cumulative table of |psi(x)|^2.

    Args:
        state (GroundStateVector): Normalized state.
        count (int): Number of snapshots.
        seed (int): Sampler seed.

    Returns:
        np.ndarray: int8 array of shape (count, N) with entries +1/-1.

    Raises:
        ValidationError: If count < 1 or the state is not normalized within 1e-9.
    """
    if count < 1:
        raise ValidationError("count must be at least 1")
    probabilities = state.probabilities
    total = float(probabilities.sum())
    if abs(total - 1.0) > NORM_TOLERANCE:
        raise ValidationError(f"state is not normalized (norm^2 = {total:.12f})")

    cdf = np.cumsum(probabilities)
    rng = np.random.default_rng(seed)
    u = rng.random(count) * cdf[-1]
    indices = np.searchsorted(cdf, u, side="right")
    np.minimum(indices, cdf.shape[0] - 1, out=indices)
    return indices_to_spins(indices, state.n_sites)


def exact_expectation_zz(
    state: GroundStateVector, i: int, j: int, single_site: bool = False
) -> float:
    """
    Exact <Z_i Z_j> (or <Z_i> when `single_site` is set) from the amplitudes.

    Raises:
        ValidationError: If a site index is out of range.
    """
    n = state.n_sites
    if not (0 <= i < n and 0 <= j < n):
        raise ValidationError(f"sites ({i}, {j}) out of range for {n} sites")
    indices = np.arange(state.amplitudes.shape[0], dtype=np.int64)
    z_i = 2.0 * ((indices >> i) & 1) - 1.0
    if single_site:
        return float(state.probabilities @ z_i)
    z_j = 2.0 * ((indices >> j) & 1) - 1.0
    return float(state.probabilities @ (z_i * z_j))
