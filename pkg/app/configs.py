import sys
import os
import json
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from spinsim.dataset import GridDataset
from spinsim.hamiltonian import HamiltonianSpec
from spinsim.lanczos import DEFAULT_MAX_ITER, DEFAULT_TOL
from training.trainer import TrainConfig
from utils.exceptions import ArtifactIOError, ValidationError

ConfigT = TypeVar("ConfigT", bound=BaseModel)

ANALYSES: Tuple[str, ...] = (
    "latent-map",
    "reconstruction",
    "data-map",
    "sweep",
    "entropy",
    "active",
    "rydberg-orders",
)


class AxisSpec(BaseModel):
    """Either explicit `values` or a `start`/`stop`/`num` range with linear or log spacing."""

    model_config = ConfigDict(frozen=True)

    values: Optional[List[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = Field(default=None, ge=1)
    spacing: Literal["linear", "log"] = "linear"

    @model_validator(mode="after")
    def check_form(self) -> "AxisSpec":
        ranged = (self.start, self.stop, self.num)
        if self.values is None and any(v is None for v in ranged):
            raise ValueError("axis needs either values or start, stop and num")
        if self.values is not None and any(v is not None for v in ranged):
            raise ValueError("axis takes values or a range, not both")
        if self.values is not None and not self.values:
            raise ValueError("axis values must be non-empty")
        if self.spacing == "log" and self.values is None and min(self.start, self.stop) <= 0:
            raise ValueError("log spacing needs positive bounds")
        return self

    def materialize(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=np.float64)
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.num)
        return np.linspace(self.start, self.stop, self.num)


class GenerateConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hamiltonian: HamiltonianSpec
    axis1: AxisSpec
    axis2: AxisSpec
    axis_names: Optional[Tuple[str, str]] = None
    samples_per_point: int = Field(ge=1)
    seed: int = 0
    tol: float = Field(default=DEFAULT_TOL, gt=0.0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=1)


class TrainFileConfig(TrainConfig):
    """Training settings plus optional architecture overrides under `model`."""

    model: Dict[str, Any] = Field(default_factory=dict)


class HoldoutSpec(BaseModel):
    """Open interval (lo, hi) of one axis whose grid points are excluded from training."""

    model_config = ConfigDict(frozen=True)

    axis: Literal["axis1", "axis2"]
    lo: float
    hi: float

    @model_validator(mode="after")
    def check_interval(self) -> "HoldoutSpec":
        if not self.lo < self.hi:
            raise ValueError("holdout band needs lo < hi")
        return self

    def excluded(self, dataset: GridDataset) -> np.ndarray:
        """Boolean flags over the chosen axis; raises if the band is invalid for this grid."""
        values = dataset.axis1 if self.axis == "axis1" else dataset.axis2
        if self.lo < values.min() or self.hi > values.max():
            raise ValidationError(
                f"holdout band ({self.lo:g}, {self.hi:g}) lies outside the {self.axis} range "
                f"[{values.min():g}, {values.max():g}]"
            )
        flags = (values > self.lo) & (values < self.hi)
        if not flags.any():
            raise ValidationError("holdout band contains no grid values")
        if flags.all():
            raise ValidationError("holdout band excludes every grid value")
        return flags


class AnalyzeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    analysis: str
    observable: str = "zz2"
    k: float = 0.8
    site: int = Field(default=0, ge=0)
    threshold: float = Field(default=0.5, gt=0.0)
    dimensions: Optional[List[int]] = None
    sweep_dim: int = Field(default=0, ge=0)
    sweep_dim2: Optional[int] = Field(default=None, ge=0)
    sweep_from: float = -3.0
    sweep_to: float = 3.0
    sweep_steps: int = Field(default=25, ge=1)
    sweep_count: int = Field(default=1000, ge=1)
    max_per_point: int = Field(default=100, ge=1)
    presets: Optional[Dict[str, Tuple[float, float]]] = None

    @field_validator("analysis")
    @classmethod
    def check_analysis(cls, value: str) -> str:
        if value not in ANALYSES:
            raise ValueError(f"unknown analysis {value!r}; valid: {', '.join(ANALYSES)}")
        return value


def load_json_config(path: str, model: Type[ConfigT], overrides: Optional[Dict[str, Any]] = None) -> ConfigT:
    """
    Reads a JSON file into a pydantic model, applying non-None overrides on top.

    Raises:
        ArtifactIOError: If the file cannot be read or is not JSON.
        ValidationError: If the content does not validate.
    """
    payload: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise ArtifactIOError(f"cannot read config {path}: {e}") from e
    payload.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate_config(model, payload)


def validate_config(model: Type[ConfigT], payload: Dict[str, Any]) -> ConfigT:
    try:
        return model.model_validate(payload)
    except pydantic.ValidationError as e:
        raise ValidationError(f"invalid {model.__name__}: {e}") from e
