import sys
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy import stats

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from spinsim.dataset import GridDataset
from utils.exceptions import ArtifactIOError, ValidationError
from utils.io import write_csv

MAP_COLUMNS = ["axis1", "axis2", "value", "label"]


@dataclass
class PhaseMap:
    """
    One real value per grid point, stored as an (len(axis1), len(axis2)) array.

    NaN marks a missing grid point.
    """

    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    label: str
    axis1_name: str = "axis1"
    axis2_name: str = "axis2"

    def __post_init__(self) -> None:
        self.axis1 = np.asarray(self.axis1, dtype=np.float64)
        self.axis2 = np.asarray(self.axis2, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.axis1.size, self.axis2.size):
            raise ValidationError(
                f"map values of shape {self.values.shape} do not match axes "
                f"({self.axis1.size}, {self.axis2.size})"
            )

    @property
    def shape(self):
        return self.values.shape

    def value_at(self, a: float, b: float) -> float:
        i = int(np.argmin(np.abs(self.axis1 - a)))
        j = int(np.argmin(np.abs(self.axis2 - b)))
        return float(self.values[i, j])

    def to_frame(self) -> pd.DataFrame:
        a, b = np.meshgrid(self.axis1, self.axis2, indexing="ij")
        return pd.DataFrame(
            {
                "axis1": a.ravel(),
                "axis2": b.ravel(),
                "value": self.values.ravel(),
                "label": self.label,
            },
            columns=MAP_COLUMNS,
        )

    def write_csv(self, path: str) -> None:
        write_csv(path, self.to_frame())

    @classmethod
    def read_csv(cls, path: str) -> "PhaseMap":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as e:
            raise ArtifactIOError(f"cannot read phase map {path}: {e}") from e
        if list(frame.columns) != MAP_COLUMNS:
            raise ArtifactIOError(f"{path}: expected columns {MAP_COLUMNS}, got {list(frame.columns)}")
        axis1 = np.unique(frame["axis1"].to_numpy())
        axis2 = np.unique(frame["axis2"].to_numpy())
        pivot = frame.pivot(index="axis1", columns="axis2", values="value")
        pivot = pivot.reindex(index=axis1, columns=axis2)
        label = str(frame["label"].iloc[0]) if len(frame) else ""
        return cls(axis1, axis2, pivot.to_numpy(), label)


def map_over_grid(
    dataset: GridDataset,
    function: Callable[[np.ndarray, int], float],
    label: str,
    threads: int = 1,
) -> PhaseMap:
    """Evaluates `function(batch, point_index)` at every grid point, in parallel over points."""
    batches = list(dataset.records.values())
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        values = list(pool.map(function, batches, range(len(batches))))
    return PhaseMap(
        dataset.axis1,
        dataset.axis2,
        np.asarray(values, dtype=np.float64).reshape(dataset.shape),
        label,
        dataset.axis1_name,
        dataset.axis2_name,
    )


def map_mean_absolute_error(
    generated: PhaseMap,
    reference: PhaseMap,
    mask: Optional[np.ndarray] = None,
) -> float:
    """Mean |generated - reference| over finite cells, optionally restricted by a boolean mask."""
    if generated.shape != reference.shape:
        raise ValidationError("maps must share a grid")
    diff = np.abs(generated.values - reference.values)
    keep = np.isfinite(diff)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValidationError("no grid points selected")
    return float(diff[keep].mean())


def map_pearson(a: PhaseMap, b: PhaseMap) -> float:
    """Pearson correlation between two maps over grid points finite in both."""
    if a.shape != b.shape:
        raise ValidationError("maps must share a grid")
    keep = np.isfinite(a.values) & np.isfinite(b.values)
    if keep.sum() < 2:
        raise ValidationError("need at least two finite grid points")
    x, y = a.values[keep], b.values[keep]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(stats.pearsonr(x, y)[0])
