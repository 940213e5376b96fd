"""
Minibatch estimators of the mutual-information / total-correlation /
dimension-wise-KL split of the aggregate KL term.

For a batch of M posteriors q(z|x_m) and one draw z_n from each, the
aggregate posterior q(z_n) is estimated by a weighted logsumexp over the
batch. Gradients of any weighted combination of the three terms are
returned in closed form through the softmax weights of each logsumexp.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from utils.exceptions import ValidationError

LOG_2PI: float = float(np.log(2.0 * np.pi))

Estimator = Literal["stratified", "weighted"]


@dataclass
class TcTerms:
    mutual_information: float
    total_correlation: float
    dimension_wise_kl: float

    @property
    def total(self) -> float:
        return self.mutual_information + self.total_correlation + self.dimension_wise_kl


@dataclass
class TcGradients:
    d_mu: np.ndarray
    d_log_var: np.ndarray
    d_z: np.ndarray


def log_importance_weights(batch_size: int, dataset_size: int, estimator: Estimator) -> np.ndarray:
    """
    (M, M) matrix of log w_nm.

    stratified: w_nn = 1/N_data, w_nm = (N_data - 1) / (N_data (M - 1)), rows sum to 1.
    weighted:   w_nm = 1 / (M N_data) everywhere.
    """
    m, n = batch_size, dataset_size
    if estimator == "weighted":
        return np.full((m, m), -np.log(m * n))
    if estimator != "stratified":
        raise ValidationError(f"unknown estimator {estimator!r}")
    weights = np.full((m, m), (n - 1) / (n * (m - 1)))
    np.fill_diagonal(weights, 1.0 / n)
    return np.log(weights)


def pairwise_log_density(mu: np.ndarray, log_var: np.ndarray, z: np.ndarray) -> np.ndarray:
    """log q(z_nj | x_m) for every (n, m, j), shape (M, M, d)."""
    diff = z[:, None, :] - mu[None, :, :]
    return -0.5 * (LOG_2PI + log_var[None, :, :] + diff**2 * np.exp(-log_var[None, :, :]))


def tc_decomposition_minibatch(
    mu: np.ndarray,
    log_var: np.ndarray,
    z: np.ndarray,
    dataset_size: int,
    estimator: Estimator = "stratified",
    coefficients: Optional[Tuple[float, float, float]] = None,
) -> Tuple[TcTerms, Optional[TcGradients]]:
    """
    Estimates (MI, TC, dimKL) for a batch and optionally their weighted gradient.

    Args:
        mu (np.ndarray): Posterior means, (M, d).
        log_var (np.ndarray): Posterior log-variances, (M, d).
        z (np.ndarray): One latent draw per row, (M, d).
        dataset_size (int): N_data, at least M.
        estimator (Estimator): "stratified" (default) or "weighted".
        coefficients (Optional[Tuple[float, float, float]]): (a, b, c) for the
            gradient of a*MI + b*TC + c*dimKL; no gradient when None.

    Returns:
        Tuple[TcTerms, Optional[TcGradients]]: The three terms and the gradients.

    Raises:
        ValidationError: If M < 2, N_data < M or shapes disagree.
    """
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if mu.ndim != 2 or mu.shape != log_var.shape or mu.shape != z.shape:
        raise ValidationError("mu, log_var and z must share shape (M, d)")
    m = mu.shape[0]
    if m < 2:
        raise ValidationError("the minibatch estimator needs at least 2 samples")
    if dataset_size < m:
        raise ValidationError("dataset_size must be at least the batch size")

    log_w = log_importance_weights(m, dataset_size, estimator)
    log_q = pairwise_log_density(mu, log_var, z)

    cond = np.einsum("nnj->n", log_q)
    joint_logits = log_w + log_q.sum(axis=2)
    marginal_logits = log_w[:, :, None] + log_q
    joint = logsumexp(joint_logits, axis=1)
    marginals = logsumexp(marginal_logits, axis=1).sum(axis=1)
    prior = -0.5 * (LOG_2PI + z**2).sum(axis=1)

    terms = TcTerms(
        mutual_information=float(np.mean(cond - joint)),
        total_correlation=float(np.mean(joint - marginals)),
        dimension_wise_kl=float(np.mean(marginals - prior)),
    )
    if coefficients is None:
        return terms, None

    a, b, c = coefficients
    # d(a MI + b TC + c KL) / d log_q[n, m, j]
    g = ((b - a) / m) * softmax(joint_logits, axis=1)[:, :, None]
    g = g + ((c - b) / m) * softmax(marginal_logits, axis=1)
    g[np.arange(m), np.arange(m), :] += a / m

    diff = z[:, None, :] - mu[None, :, :]
    precision = np.exp(-log_var)[None, :, :]
    scaled = diff * precision
    d_z = -(g * scaled).sum(axis=1) + (c / m) * z
    d_mu = (g * scaled).sum(axis=0)
    d_log_var = (g * (0.5 * diff * scaled - 0.5)).sum(axis=0)
    return terms, TcGradients(d_mu=d_mu, d_log_var=d_log_var, d_z=d_z)
