import sys
import os
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.layers import Exponential, LayerKind, LayerSpec
from models.config import ModelVariant
from models.vae import SpinVAE, as_batch
from objective.losses import (
    bernoulli_nll,
    bernoulli_nll_grad,
    mse_loss,
    mse_loss_grad,
)
from objective.tc import Estimator, tc_decomposition_minibatch
from objective.weights import LossWeights
from utils.exceptions import ValidationError

_SIGMA = Exponential(LayerSpec(kind=LayerKind.EXPONENTIAL, name="sigma", scale=0.5))


@dataclass
class LossBreakdown:
    """total = reconstruction_nll + alpha MI + beta TC + gamma dimKL (minimized)."""

    reconstruction_nll: float
    mutual_information: float
    total_correlation: float
    dimension_wise_kl: float
    total: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(list(self.as_dict().values()))))


def total_objective(
    model: SpinVAE,
    x: np.ndarray,
    weights: LossWeights,
    gamma_now: float,
    dataset_size: int,
    epsilon: np.ndarray,
    backward: bool = False,
    estimator: Estimator = "stratified",
) -> LossBreakdown:
    """
    Evaluates the training objective on one batch and optionally its gradients.

    cpvae: mean Bernoulli NLL + alpha MI + beta TC + gamma_now dimKL, with one
    reparameterized z per input. dvae: mean MSE, KL terms reported as 0.
    With `backward=True` the gradient of `total` is added to every parameter's `.grad`.

    Args:
        model (SpinVAE): Model to evaluate.
        x (np.ndarray): Batch of configurations, (M, N).
        weights (LossWeights): alpha and beta; gamma is taken from `gamma_now`.
        gamma_now (float): Current dimension-wise KL weight.
        dataset_size (int): Number of configurations in the training set.
        epsilon (np.ndarray): Standard-normal draws, (M, d).
        backward (bool): Accumulate parameter gradients.
        estimator (Estimator): Minibatch estimator of the aggregate posterior.

    Returns:
        LossBreakdown: The loss terms.

    Raises:
        ValidationError: On a negative or non-finite gamma_now or mismatched shapes.
    """
    if not np.isfinite(gamma_now) or gamma_now < 0:
        raise ValidationError("gamma_now must be finite and non-negative")
    x = as_batch(x, model.n_sites)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if epsilon.shape != (x.shape[0], model.latent_dim):
        raise ValidationError(f"epsilon shape {epsilon.shape} != ({x.shape[0]}, {model.latent_dim})")
    batch = x.shape[0]

    mu, log_var, encoder_tape = model.encoder.forward(x)
    sigma, sigma_tape = _SIGMA.forward(log_var)
    z = mu + sigma * epsilon

    if model.config.variant is ModelVariant.DVAE:
        r, decoder_tape = model.decoder.forward(z)
        reconstruction = float(mse_loss(r, x).mean())
        breakdown = LossBreakdown(reconstruction, 0.0, 0.0, 0.0, reconstruction)
        if backward:
            d_z = model.decoder.backward(decoder_tape, mse_loss_grad(r, x) / batch)
            d_log_var = _SIGMA.backward(sigma_tape, d_z * epsilon)
            model.encoder.backward(encoder_tape, d_z, d_log_var)
        return breakdown

    p, decoder_tape = model.decoder.forward(z, x)
    reconstruction = float(bernoulli_nll(p, x).mean())
    coefficients = (weights.alpha, weights.beta, gamma_now) if backward else None
    terms, tc_grads = tc_decomposition_minibatch(
        mu, log_var, z, dataset_size, estimator=estimator, coefficients=coefficients
    )
    total = (
        reconstruction
        + weights.alpha * terms.mutual_information
        + weights.beta * terms.total_correlation
        + gamma_now * terms.dimension_wise_kl
    )
    breakdown = LossBreakdown(
        reconstruction,
        terms.mutual_information,
        terms.total_correlation,
        terms.dimension_wise_kl,
        total,
    )
    if backward:
        d_z = model.decoder.backward(decoder_tape, bernoulli_nll_grad(p, x) / batch)
        d_z = d_z + tc_grads.d_z
        d_mu = d_z + tc_grads.d_mu
        d_log_var = _SIGMA.backward(sigma_tape, d_z * epsilon) + tc_grads.d_log_var
        model.encoder.backward(encoder_tape, d_mu, d_log_var)
    return breakdown


def objective_closure(
    model: SpinVAE,
    x: np.ndarray,
    weights: LossWeights,
    gamma_now: float,
    dataset_size: int,
    epsilon: np.ndarray,
    estimator: Estimator = "stratified",
    backward: bool = False,
):
    """A zero-argument callable returning the scalar total, for gradient checks."""

    def evaluate() -> float:
        return total_objective(
            model, x, weights, gamma_now, dataset_size, epsilon, backward=backward, estimator=estimator
        ).total

    return evaluate


def effective_weights(weights: Optional[LossWeights], variant: ModelVariant) -> LossWeights:
    """dvae trains without KL regularization regardless of the requested weights."""
    if variant is ModelVariant.DVAE or weights is None:
        return LossWeights()
    return weights
