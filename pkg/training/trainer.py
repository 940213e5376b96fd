import sys
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.network import zero_grad
from models.config import ModelVariant
from models.vae import SpinVAE
from objective.tc import Estimator
from objective.total import LossBreakdown, effective_weights, total_objective
from objective.weights import WEIGHT_PRESETS, LossWeights
from spinsim.dataset import GridDataset
from training.adabelief import AdaBelief
from training.schedule import run_gamma
from utils.exceptions import NumericalDivergenceError, ValidationError
from utils.io import write_csv
from utils.logger import logging
from utils.metrics import TrainingMetrics

logger = logging.getLogger(__name__)

LOSS_COLUMNS: Dict[str, str] = {
    "reconstruction_nll": "reconstruction_nll",
    "mutual_information": "MI",
    "total_correlation": "TC",
    "dimension_wise_kl": "dimKL",
}


class TrainConfig(BaseModel):
    """Optimization settings; `weights.gamma` is replaced by the linear gamma ramp."""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=256, ge=2)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    weights: LossWeights = LossWeights()
    gamma_min: float = Field(default=0.0, ge=0.0)
    gamma_max: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    checkpoint_every: int = Field(default=0, ge=0)
    variant: ModelVariant = ModelVariant.CPVAE
    estimator: Estimator = "stratified"
    sigma_sample_size: int = Field(default=4096, ge=1)

    @model_validator(mode="after")
    def check_gamma_range(self) -> "TrainConfig":
        if self.gamma_min > self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")
        return self

    @classmethod
    def from_preset(cls, preset: str, **overrides: Any) -> "TrainConfig":
        if preset not in WEIGHT_PRESETS:
            raise ValidationError(f"unknown weight preset {preset!r}; valid: {sorted(WEIGHT_PRESETS)}")
        weights = WEIGHT_PRESETS[preset]
        values = {
            "weights": weights.weights(),
            "gamma_min": weights.gamma_min,
            "gamma_max": weights.gamma_max,
        }
        values.update(overrides)
        return cls(**values)


@dataclass
class TrainingHistory:
    """Per-step loss records and per-epoch mean log sigma per latent dimension."""

    steps: List[Dict[str, float]] = field(default_factory=list)
    sigma: List[Dict[str, float]] = field(default_factory=list)

    def record_step(self, epoch: int, step: int, breakdown: LossBreakdown, gamma: float) -> None:
        if self.steps and step <= self.steps[-1]["step"]:
            raise ValidationError("history steps must increase")
        row: Dict[str, float] = {"epoch": epoch, "step": step}
        for name, column in LOSS_COLUMNS.items():
            row[column] = getattr(breakdown, name)
        row["gamma_now"] = gamma
        row["total"] = breakdown.total
        self.steps.append(row)

    def record_epoch(self, epoch: int, mean_log_sigma: np.ndarray) -> None:
        for dimension, value in enumerate(mean_log_sigma):
            self.sigma.append({"epoch": epoch, "dimension": dimension, "mean_log_sigma": float(value)})

    def loss_frame(self) -> pd.DataFrame:
        columns = ["epoch", "step", *LOSS_COLUMNS.values(), "gamma_now", "total"]
        return pd.DataFrame(self.steps, columns=columns)

    def sigma_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.sigma, columns=["epoch", "dimension", "mean_log_sigma"])

    def epoch_means(self, column: str) -> np.ndarray:
        return self.loss_frame().groupby("epoch")[column].mean().to_numpy()

    def write(self, directory: str) -> Tuple[str, str]:
        loss_path = os.path.join(directory, "history.csv")
        sigma_path = os.path.join(directory, "sigma_history.csv")
        write_csv(loss_path, self.loss_frame())
        write_csv(sigma_path, self.sigma_frame())
        return loss_path, sigma_path


def batch_slices(n_rows: int, batch_size: int) -> List[slice]:
    """Consecutive batches; a trailing batch with fewer than 2 rows is dropped."""
    batch_size = min(batch_size, n_rows)
    slices = [slice(start, min(start + batch_size, n_rows)) for start in range(0, n_rows, batch_size)]
    if slices and slices[-1].stop - slices[-1].start < 2:
        slices.pop()
    return slices


class Trainer:
    """
    Runs AdaBelief over shuffled minibatches of a grid dataset.

    Responsibilities:
        - Shuffle every configuration across grid points each epoch with a seeded generator.
        - Evaluate the objective with one latent draw per input and step the optimizer.
        - Ramp gamma linearly over all steps of the run.
        - Record losses per step and mean log sigma per epoch.
        - Write periodic checkpoints and abort on non-finite losses.
    """

    def __init__(
        self,
        model: SpinVAE,
        config: TrainConfig,
        out_dir: Optional[str] = None,
        metrics: Optional[TrainingMetrics] = None,
    ) -> None:
        if config.variant is not model.config.variant:
            raise ValidationError(
                f"train config variant {config.variant.value} does not match model {model.config.variant.value}"
            )
        self.model = model
        self.config = config
        self.out_dir = out_dir
        self.metrics = metrics
        self.weights = effective_weights(config.weights, config.variant)
        self.optimizer = AdaBelief(model.parameters(), lr=config.learning_rate)
        self.last_checkpoint: Optional[str] = None

    def _checkpoint(self, epoch: int, step: int) -> None:
        if not self.out_dir:
            return
        prefix = os.path.join(self.out_dir, "checkpoint")
        self.model.save(prefix, metadata={"epoch": epoch, "step": step})
        self.last_checkpoint = prefix

    def fit(self, dataset: GridDataset) -> TrainingHistory:
        if dataset.n_sites != self.model.n_sites:
            raise ValidationError(
                f"dataset has {dataset.n_sites} sites, model expects {self.model.n_sites}"
            )
        x_all = dataset.configurations().astype(np.float64)
        n_data = len(x_all)
        if n_data < 2:
            raise ValidationError("training needs at least 2 configurations")

        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        slices = batch_slices(n_data, cfg.batch_size)
        total_steps = cfg.epochs * len(slices)
        gamma_lo, gamma_hi = (0.0, 0.0) if cfg.variant is ModelVariant.DVAE else (cfg.gamma_min, cfg.gamma_max)
        history = TrainingHistory()
        logger.info(
            f"training {cfg.variant.value}: {n_data} configurations, {cfg.epochs} epochs x "
            f"{len(slices)} steps, lr={cfg.learning_rate}, alpha={self.weights.alpha}, "
            f"beta={self.weights.beta}, gamma {gamma_lo}->{gamma_hi}"
        )

        step = 0
        for epoch in range(cfg.epochs):
            permutation = rng.permutation(n_data)
            for batch in slices:
                started = time.perf_counter()
                x = x_all[permutation[batch]]
                epsilon = rng.standard_normal((len(x), self.model.latent_dim))
                gamma = run_gamma(step, total_steps, gamma_lo, gamma_hi)

                zero_grad(self.optimizer.parameters)
                breakdown = total_objective(
                    self.model,
                    x,
                    self.weights,
                    gamma,
                    n_data,
                    epsilon,
                    backward=True,
                    estimator=cfg.estimator,
                )
                if not breakdown.is_finite():
                    logger.error(f"non-finite loss at step {step}: {breakdown.as_dict()}")
                    raise NumericalDivergenceError(step, self.last_checkpoint)
                try:
                    self.optimizer.step()
                except NumericalDivergenceError as e:
                    raise NumericalDivergenceError(step, self.last_checkpoint) from e

                history.record_step(epoch, step, breakdown, gamma)
                if self.metrics is not None:
                    self.metrics.observe_step(breakdown.as_dict(), gamma, time.perf_counter() - started)
                step += 1

            probe = x_all[permutation[: cfg.sigma_sample_size]]
            mean_log_sigma = 0.5 * self.model.encode(probe).log_var.mean(axis=0)
            history.record_epoch(epoch, mean_log_sigma)
            frame = history.loss_frame()
            epoch_rows = frame[frame["epoch"] == epoch]
            logger.info(
                f"epoch {epoch + 1}/{cfg.epochs}: reconstruction {epoch_rows['reconstruction_nll'].mean():.5f}, "
                f"MI {epoch_rows['MI'].mean():.4f}, TC {epoch_rows['TC'].mean():.4f}, "
                f"dimKL {epoch_rows['dimKL'].mean():.4f}, "
                f"mean log sigma {np.round(mean_log_sigma, 3).tolist()}"
            )
            if self.metrics is not None:
                self.metrics.update_system_metrics()
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                self._checkpoint(epoch + 1, step)

        return history


def train(
    model: SpinVAE,
    dataset: GridDataset,
    config: TrainConfig,
    out_dir: Optional[str] = None,
    metrics: Optional[TrainingMetrics] = None,
) -> Tuple[SpinVAE, TrainingHistory]:
    """Trains `model` in place and returns it together with its history."""
    history = Trainer(model, config, out_dir=out_dir, metrics=metrics).fit(dataset)
    return model, history
