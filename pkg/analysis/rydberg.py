import sys
import os
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from analysis.phase_map import PhaseMap
from spinsim.dataset import GridDataset, decode_spins, encode_spins
from spinsim.hamiltonian import Boundary
from utils.exceptions import ArtifactIOError, ValidationError
from utils.io import atomic_open
from utils.logger import logging

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION: int = 1

FOURIER_PRESETS: Dict[str, Tuple[float, float]] = {
    "checkerboard": (np.pi, np.pi),
    "star": (np.pi, np.pi / 2),
    "striated": (np.pi, 0.0),
}

ControlPoint = Tuple[float, float]


@dataclass
class SnapshotSet2D:
    """
    Binary occupation snapshots of an L1 x L2 array, grouped by (R_b/a, Delta/Omega).

    Each snapshot is flattened row-major: site s sits at (row, col) = divmod(s, L2).
    """

    lattice_shape: Tuple[int, int]
    groups: Dict[ControlPoint, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rows, cols = self.lattice_shape
        if rows < 1 or cols < 1:
            raise ValidationError("lattice dimensions must be positive")
        self.lattice_shape = (int(rows), int(cols))
        for point, occupations in list(self.groups.items()):
            occupations = np.asarray(occupations)
            if occupations.ndim != 2 or occupations.shape[1] != self.n_sites:
                raise ValidationError(f"group {point}: expected (count, {self.n_sites}) occupations")
            if not np.isin(occupations, (0, 1)).all():
                raise ValidationError(f"group {point}: occupations must be 0 or 1")
            self.groups[point] = occupations.astype(np.uint8)

    @property
    def n_sites(self) -> int:
        return self.lattice_shape[0] * self.lattice_shape[1]

    @property
    def rb_values(self) -> np.ndarray:
        return np.unique([p[0] for p in self.groups])

    @property
    def delta_values(self) -> np.ndarray:
        return np.unique([p[1] for p in self.groups])

    def counts(self) -> pd.DataFrame:
        """Snapshots per control point."""
        rows = [
            {"rb_over_a": rb, "delta_over_omega": delta, "count": len(occ)}
            for (rb, delta), occ in sorted(self.groups.items())
        ]
        return pd.DataFrame(rows, columns=["rb_over_a", "delta_over_omega", "count"])


def _occupations(occupations: np.ndarray, lattice_shape: Tuple[int, int]) -> np.ndarray:
    occupations = np.asarray(occupations)
    if occupations.ndim == 1:
        occupations = occupations[None, :]
    if occupations.shape[1] != lattice_shape[0] * lattice_shape[1]:
        raise ValidationError(f"snapshots of length {occupations.shape[1]} do not fit {lattice_shape}")
    if not np.isin(occupations, (0, 1)).all():
        raise ValidationError("occupations must be 0 or 1")
    return occupations.astype(np.float64)


def fourier_amplitude(occupations: np.ndarray, lattice_shape: Tuple[int, int], k1: float, k2: float) -> np.ndarray:
    """|(1/sqrt(N)) sum_s exp(i (k1 row_s + k2 col_s)) n_s| per snapshot."""
    occupations = _occupations(occupations, lattice_shape)
    rows, cols = np.divmod(np.arange(occupations.shape[1]), lattice_shape[1])
    phases = np.exp(1j * (k1 * rows + k2 * cols))
    return np.abs(occupations @ phases) / np.sqrt(occupations.shape[1])


def fourier_order_parameter(
    occupations: np.ndarray,
    lattice_shape: Tuple[int, int],
    k1: float,
    k2: float,
) -> float:
    """Snapshot mean of (F(k1, k2) + F(k2, k1)) / 2."""
    forward = fourier_amplitude(occupations, lattice_shape, k1, k2)
    swapped = fourier_amplitude(occupations, lattice_shape, k2, k1)
    return float(np.mean(0.5 * (forward + swapped)))


def nearest_neighbor_bonds(lattice_shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Open-lattice nearest-neighbour bonds split into edge and bulk.

    A bond is an edge bond when both endpoints lie on the outer ring.
    """
    rows, cols = lattice_shape
    index = np.arange(rows * cols).reshape(rows, cols)
    ring = np.zeros((rows, cols), dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    bonds = np.concatenate(
        [
            np.stack([index[:, :-1].ravel(), index[:, 1:].ravel()], axis=1),
            np.stack([index[:-1, :].ravel(), index[1:, :].ravel()], axis=1),
        ]
    )
    flat_ring = ring.ravel()
    on_edge = flat_ring[bonds[:, 0]] & flat_ring[bonds[:, 1]]
    return bonds[on_edge], bonds[~on_edge]


def edge_bulk_correlator_difference(occupations: np.ndarray, lattice_shape: Tuple[int, int]) -> float:
    """Mean connected nearest-neighbour correlator over edge bonds minus the same over bulk bonds."""
    if lattice_shape[0] < 3 or lattice_shape[1] < 3:
        raise ValidationError("edge/bulk split needs a lattice of at least 3 x 3")
    n = _occupations(occupations, lattice_shape)
    mean = n.mean(axis=0)
    edge, bulk = nearest_neighbor_bonds(lattice_shape)

    def connected(bonds: np.ndarray) -> float:
        a, b = bonds[:, 0], bonds[:, 1]
        return float(((n[:, a] * n[:, b]).mean(axis=0) - mean[a] * mean[b]).mean())

    return connected(edge) - connected(bulk)


def _complete_grid(snapshots: SnapshotSet2D) -> Tuple[np.ndarray, np.ndarray]:
    rb, delta = snapshots.rb_values, snapshots.delta_values
    missing = [(a, b) for a in rb for b in delta if (a, b) not in snapshots.groups]
    if missing:
        raise ValidationError(f"snapshot grid is incomplete; missing {missing[:5]}")
    return rb, delta


def snapshots_to_dataset(snapshots: SnapshotSet2D, truncate: bool = False) -> GridDataset:
    """
    Spins x = 2n - 1 on the rectangular (R_b/a, Delta/Omega) grid.

    Unequal snapshot counts are rejected unless `truncate` is set, in which case
    every point is cut to the smallest count.
    """
    if not snapshots.groups:
        raise ValidationError("no snapshots to convert")
    rb, delta = _complete_grid(snapshots)
    counts = {len(occ) for occ in snapshots.groups.values()}
    samples = min(counts)
    if len(counts) > 1:
        if not truncate:
            raise ValidationError(f"unequal snapshot counts per point {sorted(counts)}; use truncate")
        logger.warning(f"truncating every grid point to {samples} snapshots (counts {sorted(counts)})")
    records = {
        (float(a), float(b)): (2 * snapshots.groups[(a, b)][:samples].astype(np.int8) - 1)
        for a in rb
        for b in delta
    }
    return GridDataset(
        n_sites=snapshots.n_sites,
        boundary=Boundary.PERIODIC,
        axis1_name="rb_over_a",
        axis2_name="delta_over_omega",
        axis1=rb,
        axis2=delta,
        records=records,
        samples_per_point=samples,
        source="rydberg",
        extra={"lattice_shape": list(snapshots.lattice_shape)},
    )


def rydberg_phase_maps(
    snapshots: SnapshotSet2D,
    presets: Optional[Dict[str, Tuple[float, float]]] = None,
) -> Dict[str, PhaseMap]:
    """One Fourier order-parameter map per preset plus the edge-minus-bulk map; NaN where a point is missing."""
    presets = FOURIER_PRESETS if presets is None else presets
    rb, delta = snapshots.rb_values, snapshots.delta_values
    maps: Dict[str, np.ndarray] = {name: np.full((rb.size, delta.size), np.nan) for name in presets}
    maps["edge_bulk"] = np.full((rb.size, delta.size), np.nan)
    small = min(snapshots.lattice_shape) < 3
    if small:
        logger.warning(f"lattice {snapshots.lattice_shape} too small for the edge/bulk map")
    for (a, b), occupations in snapshots.groups.items():
        i, j = int(np.searchsorted(rb, a)), int(np.searchsorted(delta, b))
        for name, (k1, k2) in presets.items():
            maps[name][i, j] = fourier_order_parameter(occupations, snapshots.lattice_shape, k1, k2)
        if not small:
            maps["edge_bulk"][i, j] = edge_bulk_correlator_difference(occupations, snapshots.lattice_shape)
    return {
        name: PhaseMap(rb, delta, values, name, "rb_over_a", "delta_over_omega")
        for name, values in maps.items()
    }


@dataclass
class IngestReport:
    lines: int = 0
    accepted: int = 0
    rejected: int = 0
    rejected_lines: List[int] = field(default_factory=list)


def ingest_snapshot_records(
    lines: Iterable[str],
    lattice_shape: Tuple[int, int],
) -> Tuple[SnapshotSet2D, IngestReport]:
    """
    Parses newline-delimited {"rb_over_a", "delta_over_omega", "bits"} records.

    Records whose bit string has the wrong length or non-binary characters are
    rejected and counted; anything that is not such a JSON object raises.

    Raises:
        ArtifactIOError: On a malformed line, with its line number.
    """
    n_sites = lattice_shape[0] * lattice_shape[1]
    report = IngestReport()
    grouped: Dict[ControlPoint, List[np.ndarray]] = {}
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        report.lines += 1
        try:
            record = json.loads(line)
            point = (float(record["rb_over_a"]), float(record["delta_over_omega"]))
            bits = record["bits"]
            if not isinstance(bits, str):
                raise TypeError("bits must be a string")
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactIOError(f"malformed snapshot record: {e}", line=line_number) from e
        if len(bits) != n_sites or bits.strip("01"):
            report.rejected += 1
            report.rejected_lines.append(line_number)
            continue
        grouped.setdefault(point, []).append(np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0"))
        report.accepted += 1

    if report.rejected:
        logger.warning(f"rejected {report.rejected} snapshot records (lines {report.rejected_lines[:10]})")
    if not grouped:
        logger.warning("no snapshots ingested")
    snapshots = SnapshotSet2D(lattice_shape, {p: np.stack(rows) for p, rows in grouped.items()})
    return snapshots, report


def write_snapshots(snapshots: SnapshotSet2D, path: str) -> None:
    header = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "kind": "rydberg_snapshots",
        "lattice_shape": list(snapshots.lattice_shape),
    }
    with atomic_open(path) as handle:
        handle.write(json.dumps(header) + "\n")
        for (rb, delta), occupations in sorted(snapshots.groups.items()):
            record = {
                "rb_over_a": rb,
                "delta_over_omega": delta,
                "snapshots": encode_spins(2 * occupations.astype(np.int8) - 1),
            }
            handle.write(json.dumps(record) + "\n")


def read_snapshots(path: str) -> SnapshotSet2D:
    if not os.path.exists(path):
        raise ArtifactIOError(f"snapshot file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            header = json.loads(handle.readline())
            if header.get("format_version") != SNAPSHOT_FORMAT_VERSION or header.get("kind") != "rydberg_snapshots":
                raise ValueError("not a snapshot file of a supported version")
            shape = tuple(int(v) for v in header["lattice_shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactIOError(f"malformed header: {e}", line=1) from e
        n_sites = shape[0] * shape[1]
        groups: Dict[ControlPoint, np.ndarray] = {}
        for line_number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                point = (float(record["rb_over_a"]), float(record["delta_over_omega"]))
                spins = decode_spins(record["snapshots"], n_sites)
            except (KeyError, TypeError, ValueError) as e:
                raise ArtifactIOError(f"malformed record: {e}", line=line_number) from e
            groups[point] = ((spins + 1) // 2).astype(np.uint8)
    return SnapshotSet2D(shape, groups)
