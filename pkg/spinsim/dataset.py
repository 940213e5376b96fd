import sys
import os
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from spinsim.hamiltonian import Boundary, HamiltonianSpec, ModelKind
from spinsim.lanczos import DEFAULT_MAX_ITER, DEFAULT_TOL, lanczos_ground_state
from spinsim.sampling import sample_configurations
from utils.exceptions import ArtifactIOError, ConvergenceError, GridPointError, ValidationError
from utils.io import atomic_open
from utils.logger import logging

logger = logging.getLogger(__name__)

FORMAT_VERSION: int = 1

DEFAULT_AXES: Dict[ModelKind, Tuple[str, str]] = {
    ModelKind.NNN_TFIM: ("j2", "h"),
    ModelKind.LR_TFIM: ("alpha", "h"),
}

Point = Tuple[float, float]


def encode_spins(batch: np.ndarray) -> List[str]:
    """Encodes +1/-1 rows as '1'/'0' strings, site 0 leftmost."""
    digits = ((np.asarray(batch) > 0).astype(np.uint8) + ord("0"))
    return [row.tobytes().decode("ascii") for row in digits]


def decode_spins(strings: Sequence[str], n_sites: int) -> np.ndarray:
    batch = np.empty((len(strings), n_sites), dtype=np.int8)
    for row, text in enumerate(strings):
        if len(text) != n_sites or text.strip("01"):
            raise ValidationError(f"sample {row} is not a 0/1 string of length {n_sites}")
        batch[row] = 2 * (np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")) - 1
    return batch


@dataclass
class GridDataset:
    """
    Snapshots on a rectangular grid of two Hamiltonian parameters.

    Records are kept in row-major order (axis1 major). Every grid point holds
    exactly `samples_per_point` configurations of length `n_sites`. Simulated
    grids carry their Hamiltonian template; ingested snapshot grids do not.
    """

    n_sites: int
    boundary: Boundary
    axis1_name: str
    axis2_name: str
    axis1: np.ndarray
    axis2: np.ndarray
    records: Dict[Point, np.ndarray]
    samples_per_point: int
    seed: int = 0
    template: Optional[HamiltonianSpec] = None
    source: str = "snapshots"
    extra: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.template is not None:
            self.source = self.template.model.value
            if self.template.n_sites != self.n_sites:
                raise ValidationError("template site count does not match n_sites")
        self.axis1 = np.asarray(self.axis1, dtype=np.float64)
        self.axis2 = np.asarray(self.axis2, dtype=np.float64)
        if self.axis1.size == 0 or self.axis2.size == 0:
            raise ValidationError("grid axes must be non-empty")
        if np.any(np.diff(self.axis1) <= 0) or np.any(np.diff(self.axis2) <= 0):
            raise ValidationError("grid axes must be strictly increasing")
        if self.samples_per_point < 1:
            raise ValidationError("samples_per_point must be positive")
        expected = {(float(a), float(b)) for a in self.axis1 for b in self.axis2}
        if set(self.records) != expected:
            raise ValidationError("records must cover every grid point exactly once")
        for point, batch in self.records.items():
            if batch.shape != (self.samples_per_point, self.n_sites):
                raise ValidationError(
                    f"point {point} holds shape {batch.shape}, expected "
                    f"({self.samples_per_point}, {self.n_sites})"
                )
        self.records = {point: self.records[point] for point in self.points()}

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.axis1.size, self.axis2.size)

    def points(self) -> Iterator[Point]:
        for a in self.axis1:
            for b in self.axis2:
                yield (float(a), float(b))

    def configurations(self) -> np.ndarray:
        """All configurations stacked in record order, shape (points * samples, N)."""
        return np.concatenate(list(self.records.values()), axis=0)

    def __len__(self) -> int:
        return len(self.records) * self.samples_per_point

    def restrict(self, axis: str, keep: np.ndarray) -> "GridDataset":
        """Returns the sub-grid keeping only the flagged values of one axis."""
        keep = np.asarray(keep, dtype=bool)
        axis1 = self.axis1[keep] if axis == "axis1" else self.axis1
        axis2 = self.axis2[keep] if axis == "axis2" else self.axis2
        if axis1.size == 0 or axis2.size == 0:
            raise ValidationError("restriction removes every grid point")
        wanted = {(float(a), float(b)) for a in axis1 for b in axis2}
        return GridDataset(
            n_sites=self.n_sites,
            boundary=self.boundary,
            axis1_name=self.axis1_name,
            axis2_name=self.axis2_name,
            axis1=axis1,
            axis2=axis2,
            records={p: b for p, b in self.records.items() if p in wanted},
            samples_per_point=self.samples_per_point,
            seed=self.seed,
            template=self.template,
            source=self.source,
            extra=dict(self.extra),
        )


def point_seeds(seed: int, n_points: int) -> List[Tuple[int, int]]:
    """
    Per-point (lanczos_seed, sample_seed) pairs.

    SeedSequence(seed) is spawned once per grid point in row-major order and
    each child yields two 32-bit words.
    """
    children = np.random.SeedSequence(seed).spawn(n_points)
    return [tuple(int(w) for w in child.generate_state(2)) for child in children]


def _solve_point(
    spec: HamiltonianSpec,
    point: Point,
    seeds: Tuple[int, int],
    samples_per_point: int,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    try:
        state = lanczos_ground_state(spec, tol=tol, max_iter=max_iter, seed=seeds[0])
    except ConvergenceError as e:
        raise GridPointError(point, e) from e
    logger.debug(f"point {point}: E0 = {state.energy:.10f}")
    return sample_configurations(state, samples_per_point, seed=seeds[1])


def generate_grid_dataset(
    template: HamiltonianSpec,
    axis1_values: Sequence[float],
    axis2_values: Sequence[float],
    samples_per_point: int,
    seed: int,
    axis_names: Optional[Tuple[str, str]] = None,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GridDataset:
    """
    Exact ground-state snapshots over a parameter grid.

    Grid points are independent: each one runs Lanczos then Born sampling with
    its own seeds, so the result does not depend on `threads`.

    Args:
        template (HamiltonianSpec): Fixed parameters; swept fields are overwritten.
        axis1_values (Sequence[float]): Values of the first swept parameter.
        axis2_values (Sequence[float]): Values of the second swept parameter.
        samples_per_point (int): Snapshots per grid point.
        seed (int): Root seed.
        axis_names (Optional[Tuple[str, str]]): Swept fields; defaults to (j2, h) or (alpha, h).
        threads (int): Worker threads.

    Returns:
        GridDataset: The populated grid.

    Raises:
        ValidationError: On empty axes or parameter values outside the model's ranges.
        GridPointError: If Lanczos fails at a grid point.
    """
    names = axis_names or DEFAULT_AXES[template.model]
    axis1 = np.sort(np.asarray(axis1_values, dtype=np.float64))
    axis2 = np.sort(np.asarray(axis2_values, dtype=np.float64))
    if axis1.size == 0 or axis2.size == 0:
        raise ValidationError("grid axes must be non-empty")

    points = [(float(a), float(b)) for a in axis1 for b in axis2]
    try:
        specs = [template.with_values(**{names[0]: a, names[1]: b}) for a, b in points]
    except ValueError as e:
        raise ValidationError(f"grid values outside the model's valid range: {e}") from e
    seeds = point_seeds(seed, len(points))

    logger.info(
        f"generating {len(points)} grid points x {samples_per_point} samples "
        f"({template.model.value}, N={template.n_sites}, threads={threads})"
    )
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        batches = list(
            pool.map(
                lambda args: _solve_point(*args, samples_per_point, tol, max_iter),
                zip(specs, points, seeds),
            )
        )

    return GridDataset(
        n_sites=template.n_sites,
        boundary=template.boundary,
        axis1_name=names[0],
        axis2_name=names[1],
        axis1=axis1,
        axis2=axis2,
        records=dict(zip(points, batches)),
        samples_per_point=samples_per_point,
        seed=seed,
        template=template,
    )


def write_dataset(dataset: GridDataset, path: str) -> None:
    """Writes the newline-delimited JSON dataset file (header line, then one record per point)."""
    header = {
        "format_version": FORMAT_VERSION,
        "model": dataset.source,
        "n_sites": dataset.n_sites,
        "boundary": dataset.boundary.value,
        "template": (
            dataset.template.model_dump(mode="json") if dataset.template else None
        ),
        "axes": {
            "axis1": {"name": dataset.axis1_name, "values": dataset.axis1.tolist()},
            "axis2": {"name": dataset.axis2_name, "values": dataset.axis2.tolist()},
        },
        "samples_per_point": dataset.samples_per_point,
        "seed": dataset.seed,
    }
    if dataset.extra:
        header["extra"] = dataset.extra
    with atomic_open(path) as handle:
        handle.write(json.dumps(header) + "\n")
        for (a, b), batch in dataset.records.items():
            record = {"axis1": a, "axis2": b, "samples": encode_spins(batch)}
            handle.write(json.dumps(record) + "\n")


def read_dataset(path: str) -> GridDataset:
    """
    Reads a dataset file written by `write_dataset`.

    Raises:
        ArtifactIOError: If the file is missing or a line is malformed (line number attached).
    """
    if not os.path.exists(path):
        raise ArtifactIOError(f"dataset file not found: {path}")
    records: Dict[Point, np.ndarray] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            header = _read_header(handle.readline())
            for line_number, line in enumerate(handle, start=2):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    point = (float(record["axis1"]), float(record["axis2"]))
                    records[point] = decode_spins(record["samples"], header["n_sites"])
                except (KeyError, TypeError, ValueError) as e:
                    raise ArtifactIOError(f"malformed record: {e}", line=line_number) from e
    except UnicodeDecodeError as e:
        raise ArtifactIOError(f"dataset file is not UTF-8 text: {e}") from e

    try:
        return GridDataset(records=records, **header)
    except ValidationError as e:
        raise ArtifactIOError(f"inconsistent dataset: {e}") from e


def _read_header(line: str) -> Dict[str, Any]:
    """GridDataset keyword arguments from the first line of a dataset file."""
    try:
        header = json.loads(line)
        if header.get("format_version") != FORMAT_VERSION:
            raise ArtifactIOError(
                f"unsupported format_version {header.get('format_version')}", line=1
            )
        axes = header["axes"]
        return {
            "n_sites": int(header["n_sites"]),
            "boundary": Boundary(header["boundary"]),
            "axis1_name": axes["axis1"]["name"],
            "axis2_name": axes["axis2"]["name"],
            "axis1": np.array(axes["axis1"]["values"], dtype=np.float64),
            "axis2": np.array(axes["axis2"]["values"], dtype=np.float64),
            "samples_per_point": int(header["samples_per_point"]),
            "seed": int(header.get("seed", 0)),
            "template": (
                HamiltonianSpec.model_validate(header["template"])
                if header.get("template")
                else None
            ),
            "source": str(header.get("model", "snapshots")),
            "extra": header.get("extra", {}),
        }
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise ArtifactIOError(f"malformed header: {e}", line=1) from e
