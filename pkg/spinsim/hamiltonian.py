import sys
import os
from enum import Enum
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.exceptions import ValidationError

MAX_SITES: int = 20
DENSE_LIMIT: int = 12


class ModelKind(str, Enum):
    NNN_TFIM = "nnn_tfim"
    LR_TFIM = "lr_tfim"


class Boundary(str, Enum):
    PERIODIC = "periodic"
    OPEN = "open"


class HamiltonianSpec(BaseModel):
    """
    Parameters of a transverse-field Ising chain.

    NNN_TFIM: H = sum_i [-Z_i Z_{i+1} + j2 Z_i Z_{i+2} + h X_i], periodic.
    LR_TFIM:  H = sum_i h X_i - sum_{i<j} Z_i Z_j / |i-j|^alpha, open.
    """

    model_config = ConfigDict(frozen=True, use_enum_values=False)

    model: ModelKind
    n_sites: int = Field(ge=1, le=MAX_SITES)
    boundary: Boundary
    h: float = Field(ge=0.0)
    j2: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    alpha: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def check_model_fields(self) -> "HamiltonianSpec":
        if self.model is ModelKind.NNN_TFIM:
            if self.boundary is not Boundary.PERIODIC:
                raise ValueError("NNN_TFIM requires periodic boundary")
            if self.j2 is None:
                raise ValueError("NNN_TFIM requires j2")
            if self.n_sites < 3 and self.j2 > 0:
                raise ValueError("NNN_TFIM with j2 > 0 needs at least 3 sites")
        else:
            if self.boundary is not Boundary.OPEN:
                raise ValueError("LR_TFIM requires open boundary")
            if self.alpha is None:
                raise ValueError("LR_TFIM requires alpha")
            if self.n_sites < 2:
                raise ValueError("LR_TFIM needs at least 2 sites")
        return self

    def with_values(self, **values: float) -> "HamiltonianSpec":
        """Returns a validated copy with some parameters replaced."""
        return HamiltonianSpec.model_validate({**self.model_dump(), **values})

    @property
    def dimension(self) -> int:
        return 2**self.n_sites


def basis_spins(n_sites: int) -> np.ndarray:
    """
    Spin table of the computational basis, shape (2^N, N), entries +1/-1.

    Site k is bit k of the basis index (site 0 least significant); bit 1 is spin +1.
    """
    indices = np.arange(2**n_sites, dtype=np.int64)
    bits = (indices[:, None] >> np.arange(n_sites, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def zz_bonds(spec: HamiltonianSpec) -> List[Tuple[int, int, float]]:
    """Lists (i, j, coefficient) for every Z_i Z_j term of the Hamiltonian."""
    n = spec.n_sites
    bonds: List[Tuple[int, int, float]] = []
    if spec.model is ModelKind.NNN_TFIM:
        if n == 1:
            return bonds
        for i in range(n):
            bonds.append((i, (i + 1) % n, -1.0))
        if spec.j2:
            for i in range(n):
                bonds.append((i, (i + 2) % n, float(spec.j2)))
    else:
        for i in range(n):
            for j in range(i + 1, n):
                bonds.append((i, j, -1.0 / float(j - i) ** spec.alpha))
    return bonds


class TransverseFieldIsing:
    """
    Matrix-free action of a transverse-field Ising Hamiltonian.

    Responsibilities:
        - Precompute the diagonal (all Z-Z terms) once per parameter point.
        - Apply the off-diagonal field term as single-bit flips on the amplitude vector.
        - Build the dense matrix for small chains, used as an oracle.
    """

    def __init__(self, spec: HamiltonianSpec) -> None:
        self.spec: HamiltonianSpec = spec
        self.n_sites: int = spec.n_sites
        self.dimension: int = spec.dimension

    @cached_property
    def diagonal(self) -> np.ndarray:
        spins = basis_spins(self.n_sites)
        diag = np.zeros(self.dimension, dtype=np.float64)
        for i, j, coefficient in zz_bonds(self.spec):
            diag += coefficient * (spins[:, i] * spins[:, j])
        return diag

    def apply(self, v: np.ndarray) -> np.ndarray:
        """
        Computes H @ v.

        Args:
            v (np.ndarray): Real vector of length 2^N.

        Returns:
            np.ndarray: H @ v, same length.

        Raises:
            ValidationError: If the vector length is not 2^N.
        """
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise ValidationError(
                f"vector of shape {v.shape} does not match dimension {self.dimension}"
            )
        out = self.diagonal * v
        if self.spec.h != 0.0:
            for k in range(self.n_sites):
                # flipping bit k swaps the two halves of every 2^(k+1) block
                flipped = v.reshape(-1, 2, 2**k)[:, ::-1, :].reshape(-1)
                out += self.spec.h * flipped
        return out

    def to_dense(self) -> np.ndarray:
        if self.n_sites > DENSE_LIMIT:
            raise ValidationError(
                f"dense matrix requested for {self.n_sites} sites (limit {DENSE_LIMIT})"
            )
        return np.column_stack(
            [self.apply(column) for column in np.eye(self.dimension)]
        )


def apply_hamiltonian(spec: HamiltonianSpec, v: np.ndarray) -> np.ndarray:
    """Applies the Hamiltonian described by `spec` to `v` without materializing it."""
    return TransverseFieldIsing(spec).apply(v)
