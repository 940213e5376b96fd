import sys
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.checkpoint import load_checkpoint, save_checkpoint
from autodiff.layers import Parameter
from autodiff.network import set_all
from models.config import ModelConfig
from models.decoder import AutoregressiveDecoder, DeterministicDecoder
from models.encoder import Encoder
from utils.exceptions import ArtifactIOError, UnsupportedOperationError, ValidationError
from utils.logger import logging

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR: float = 1e-7


@dataclass
class LatentStats:
    """Encoder outputs for a batch: mean and log-variance, both (B, d)."""

    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)


@dataclass
class LatentSample:
    """z = mu + sigma * epsilon, with epsilon kept so z can be rebuilt."""

    z: np.ndarray
    epsilon: np.ndarray


def as_batch(x: np.ndarray, n_sites: int) -> np.ndarray:
    """Promotes a single configuration to a batch of one and checks the site count."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_sites:
        raise ValidationError(f"expected configurations of length {n_sites}, got shape {x.shape}")
    return x


class SpinVAE:
    """
    Encoder plus either the autoregressive (cpvae) or deterministic (dvae) decoder.

    Responsibilities:
        - Encode spin configurations into Gaussian latent statistics.
        - Draw reparameterized latent samples.
        - Evaluate conditionals on observed configurations and sample configurations ancestrally (cpvae).
        - Produce deterministic reconstructions (dvae).
        - Save and restore all parameters through the checkpoint format.
    """

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        self.config: ModelConfig = config
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(config, rng)
        if config.is_autoregressive:
            self.decoder = AutoregressiveDecoder(config, rng)
        else:
            self.decoder = DeterministicDecoder(config, rng)

    @property
    def n_sites(self) -> int:
        return self.config.n_sites

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def parameters(self) -> List[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def encode(self, x: np.ndarray) -> LatentStats:
        mu, log_var, _ = self.encoder.forward(as_batch(x, self.n_sites))
        return LatentStats(mu, log_var)

    def reparameterize(
        self,
        stats: LatentStats,
        epsilon: Optional[np.ndarray] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> LatentSample:
        if epsilon is None:
            epsilon = (rng or np.random.default_rng()).standard_normal(stats.mu.shape)
        epsilon = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), stats.mu.shape)
        return LatentSample(stats.mu + stats.sigma * epsilon, np.array(epsilon))

    def _latent_batch(self, z: Any, rows: int) -> np.ndarray:
        z = z.z if isinstance(z, LatentSample) else z
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = np.broadcast_to(z, (rows, z.size))
        if z.shape != (rows, self.latent_dim):
            raise ValidationError(f"latent batch of shape {z.shape}, expected ({rows}, {self.latent_dim})")
        return z

    def decode_conditionals(self, z: Any, x: np.ndarray) -> np.ndarray:
        """p(x_i = +1 | x_<i, z) for every site, shape (B, N)."""
        if not self.config.is_autoregressive:
            raise UnsupportedOperationError("decode_conditionals needs the autoregressive decoder")
        x = as_batch(x, self.n_sites)
        p, _ = self.decoder.forward(self._latent_batch(z, x.shape[0]), x)
        return p

    def log_probability(self, z: Any, x: np.ndarray) -> np.ndarray:
        """log p(x | z) under the decoder's conditionals (clamped), shape (B,)."""
        x = as_batch(x, self.n_sites)
        p = np.clip(self.decode_conditionals(z, x), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
        return np.where(x > 0, np.log(p), np.log1p(-p)).sum(axis=1)

    def autoregressive_sample(self, z: Any, count: int, seed: int) -> np.ndarray:
        """
        Exact ancestral samples, one site at a time.

        Args:
            z: A single latent vector (broadcast to every sample) or one per sample.
            count (int): Number of configurations.
            seed (int): Seed of the uniform draws.

        Returns:
            np.ndarray: int8 configurations of shape (count, N).
        """
        if not self.config.is_autoregressive:
            raise UnsupportedOperationError("autoregressive_sample needs the autoregressive decoder")
        if count < 1:
            raise ValidationError("count must be positive")
        z = self._latent_batch(z, count)
        rng = np.random.default_rng(seed)
        uniforms = rng.random((count, self.n_sites))
        x = np.zeros((count, self.n_sites))
        for site in range(self.n_sites):
            p, _ = self.decoder.forward(z, x)
            x[:, site] = np.where(uniforms[:, site] < p[:, site], 1.0, -1.0)
        return x.astype(np.int8)

    def dvae_decode(self, z: Any) -> np.ndarray:
        """Deterministic reconstruction in [-1, 1], shape (B, N)."""
        if self.config.is_autoregressive:
            raise UnsupportedOperationError("dvae_decode needs the deterministic decoder")
        z = z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=np.float64)
        rows = 1 if z.ndim == 1 else z.shape[0]
        r, _ = self.decoder.forward(self._latent_batch(z, rows))
        return r

    def generate(self, x: np.ndarray, seed: int) -> np.ndarray:
        """
        One generated configuration per input: encode, sample z, then decode.

        The dvae output is thresholded at 0 with ties going to +1.
        """
        rng = np.random.default_rng(seed)
        sample = self.reparameterize(self.encode(x), rng=rng)
        if self.config.is_autoregressive:
            return self.autoregressive_sample(sample.z, sample.z.shape[0], seed=int(rng.integers(2**32)))
        return np.where(self.dvae_decode(sample.z) >= 0, 1, -1).astype(np.int8)

    def save(self, prefix: str, metadata: Optional[Dict[str, Any]] = None) -> str:
        manifest_path, _ = save_checkpoint(
            prefix,
            self.parameters(),
            {"encoder": self.encoder.specs(), "decoder": self.decoder.specs()},
            {"model_config": self.config.model_dump(mode="json"), **(metadata or {})},
        )
        logger.info(f"checkpoint written: {manifest_path}")
        return manifest_path

    @classmethod
    def load(cls, prefix: str) -> "SpinVAE":
        manifest, arrays = load_checkpoint(prefix)
        try:
            config = ModelConfig.model_validate(manifest["metadata"]["model_config"])
        except (KeyError, ValueError) as e:
            raise ArtifactIOError(f"checkpoint {prefix} has no valid model_config: {e}") from e
        model = cls(config)
        for parameter in model.parameters():
            if parameter.name not in arrays:
                raise ArtifactIOError(f"checkpoint {prefix} lacks parameter {parameter.name}")
            try:
                parameter.assign(arrays[parameter.name])
            except ValueError as e:
                raise ArtifactIOError(str(e)) from e
        return model


def encode(model: SpinVAE, x: np.ndarray) -> LatentStats:
    return model.encode(x)


def reparameterize(stats: LatentStats, epsilon: np.ndarray) -> LatentSample:
    epsilon = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), stats.mu.shape)
    return LatentSample(stats.mu + stats.sigma * epsilon, np.array(epsilon))


def zero_model(config: ModelConfig) -> SpinVAE:
    """A model with every weight and bias set to 0."""
    model = SpinVAE(config)
    set_all(model.parameters(), 0.0)
    return model

