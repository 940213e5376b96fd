import sys
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from spinsim.hamiltonian import HamiltonianSpec, TransverseFieldIsing
from utils.exceptions import ConvergenceError, ValidationError
from utils.logger import logging

logger = logging.getLogger(__name__)

DEFAULT_TOL: float = 1e-10
DEFAULT_MAX_ITER: int = 500
DEFAULT_KRYLOV_DIM: int = 40


@dataclass(frozen=True)
class GroundStateVector:
    """
    Exact ground state: 2^N real amplitudes and the ground energy.

    The amplitude array is made read-only so one state can be shared between
    sampler threads.
    """

    amplitudes: np.ndarray
    energy: float

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=np.float64)
        size = amplitudes.shape[0] if amplitudes.ndim == 1 else 0
        if size < 2 or size & (size - 1):
            raise ValidationError("amplitudes must be a vector of length 2^N")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def n_sites(self) -> int:
        return int(self.amplitudes.shape[0]).bit_length() - 1

    @property
    def probabilities(self) -> np.ndarray:
        return self.amplitudes**2


def _lowest_ritz_pair(alphas: np.ndarray, betas: np.ndarray):
    if alphas.shape[0] == 1:
        return float(alphas[0]), np.ones(1)
    values, vectors = eigh_tridiagonal(
        alphas, betas, select="i", select_range=(0, 0)
    )
    return float(values[0]), vectors[:, 0]


def lanczos_ground_state(
    spec: HamiltonianSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
) -> GroundStateVector:
    """
    Lowest eigenpair of the Hamiltonian by restarted Lanczos.

    Each cycle builds at most `krylov_dim` fully reorthogonalized Krylov vectors
    from the current start vector, extracts the lowest Ritz pair and restarts
    from the Ritz vector until the true residual ||H psi - E psi|| drops below
    `tol`. The first start vector is a seeded Gaussian draw.

    Args:
        spec (HamiltonianSpec): Chain parameters.
        tol (float): Residual tolerance.
        max_iter (int): Budget of matrix-vector products.
        seed (int): Seed of the random start vector.
        krylov_dim (int): Krylov basis size per cycle.

    Returns:
        GroundStateVector: Normalized ground state and its energy.

    Raises:
        ValidationError: On non-positive tolerance or iteration budget.
        ConvergenceError: If the residual is still above `tol` after `max_iter` products.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if max_iter < 1 or krylov_dim < 1:
        raise ValidationError("max_iter and krylov_dim must be at least 1")

    hamiltonian = TransverseFieldIsing(spec)
    dim = hamiltonian.dimension
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(dim)
    start /= np.linalg.norm(start)

    matvecs = 0
    residual = np.inf
    while matvecs < max_iter:
        size = min(krylov_dim, dim, max_iter - matvecs)
        basis = np.empty((size, dim), dtype=np.float64)
        basis[0] = start
        alphas, betas = [], []
        for j in range(size):
            w = hamiltonian.apply(basis[j])
            matvecs += 1
            alpha = float(basis[j] @ w)
            alphas.append(alpha)
            active = basis[: j + 1]
            # two passes of classical Gram-Schmidt keep the basis orthogonal to roundoff
            w -= active.T @ (active @ w)
            w -= active.T @ (active @ w)
            beta = float(np.linalg.norm(w))
            if j == size - 1 or beta <= 1e-12 * max(1.0, abs(alpha)):
                break
            betas.append(beta)
            basis[j + 1] = w / beta

        k = len(alphas)
        _, ritz = _lowest_ritz_pair(np.array(alphas), np.array(betas[: k - 1]))
        psi = basis[:k].T @ ritz
        psi /= np.linalg.norm(psi)
        h_psi = hamiltonian.apply(psi)
        matvecs += 1
        energy = float(psi @ h_psi)
        residual = float(np.linalg.norm(h_psi - energy * psi))
        logger.debug(
            f"lanczos cycle: krylov={k} matvecs={matvecs} E={energy:.12f} residual={residual:.2e}"
        )
        if residual <= tol:
            return GroundStateVector(amplitudes=psi, energy=energy)
        start = psi

    raise ConvergenceError(residual=residual, iterations=matvecs)
