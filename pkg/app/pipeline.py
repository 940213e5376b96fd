import sys
import os
import json
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from analysis.latent import latent_phase_map, latent_sweep_generate, variance_entropy_relation
from analysis.phase_map import PhaseMap, map_mean_absolute_error
from analysis.reconstruction import reconstruction_map, training_data_map
from analysis.rydberg import (
    ingest_snapshot_records,
    read_snapshots,
    rydberg_phase_maps,
    snapshots_to_dataset,
    write_snapshots,
)
from app.configs import (
    AnalyzeConfig,
    GenerateConfig,
    HoldoutSpec,
    TrainFileConfig,
    validate_config,
)
from app.manifest import RunManifest
from autodiff.gradcheck import GradientCheckReport, finite_difference_check
from models.config import ModelConfig
from models.vae import SpinVAE
from objective.total import objective_closure
from objective.weights import WEIGHT_PRESETS
from spinsim.dataset import GridDataset, generate_grid_dataset, read_dataset, write_dataset
from spinsim.hamiltonian import Boundary
from training.diagnostics import active_latent_neurons, mean_sigma
from training.trainer import TrainConfig, train
from utils.exceptions import ArtifactIOError, GradientCheckError, ValidationError
from utils.io import write_csv, write_json
from utils.logger import logging
from utils.metrics import TrainingMetrics

logger = logging.getLogger(__name__)


class Pipeline:
    """
    Runs the command-line workflows and writes their artifacts into one output directory.

    Responsibilities:
        - Generate exact-state snapshot grids and ingest experimental Rydberg snapshots.
        - Train cpvae/dvae models, including holdout experiments over a band of one axis.
        - Dispatch analyses to the analysis package and export plot-ready CSVs.
        - Sample configurations from checkpoints and run gradient checks.
        - Write a run manifest next to every set of artifacts.
    """

    def __init__(
        self,
        out_dir: str,
        threads: int = 1,
        strict: bool = False,
        seed: Optional[int] = None,
    ) -> None:
        self.out_dir: str = out_dir
        self.threads: int = max(1, threads)
        self.strict: bool = strict
        self.seed: Optional[int] = seed
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _seed(self, configured: int) -> int:
        return configured if self.seed is None else self.seed

    def load_grid(self, path: str) -> GridDataset:
        """Reads a grid dataset, converting a Rydberg snapshot file on the fly."""
        try:
            with open(path, "r", encoding="utf-8") as handle:
                header = json.loads(handle.readline() or "{}")
        except (OSError, json.JSONDecodeError) as e:
            raise ArtifactIOError(f"cannot read {path}: {e}", line=1) from e
        if isinstance(header, dict) and header.get("kind") == "rydberg_snapshots":
            return snapshots_to_dataset(read_snapshots(path), truncate=not self.strict)
        return read_dataset(path)

    def generate(self, config: GenerateConfig) -> str:
        """
        Writes the snapshot grid described by `config` to dataset.jsonl.

        Raises:
            ValidationError: On invalid grid values.
            GridPointError: If Lanczos fails at a grid point.
        """
        seed = self._seed(config.seed)
        manifest = RunManifest(command="generate", config=config.model_dump(mode="json"), seeds={"seed": seed})
        dataset = generate_grid_dataset(
            config.hamiltonian,
            config.axis1.materialize(),
            config.axis2.materialize(),
            config.samples_per_point,
            seed,
            axis_names=config.axis_names,
            threads=self.threads,
            tol=config.tol,
            max_iter=config.max_iter,
        )
        manifest.mark("generate")
        dataset.extra["manifest"] = manifest.file_name
        path = self._path("dataset.jsonl")
        write_dataset(dataset, path)
        manifest.add_output("dataset", path)
        manifest.write(self.out_dir, {"grid_points": len(dataset.records), "configurations": len(dataset)})
        logger.info(f"wrote {len(dataset.records)} grid points to {path}")
        return path

    def ingest(self, input_path: str, lattice_shape: Tuple[int, int]) -> Dict[str, str]:
        """
        Validates raw Rydberg snapshot records and writes them in the internal snapshot format.

        Raises:
            ValidationError: In strict mode, when any record was rejected.
        """
        manifest = RunManifest(
            command="ingest",
            config={"lattice_shape": list(lattice_shape)},
            inputs={"snapshots": os.path.abspath(input_path)},
        )
        try:
            with open(input_path, "r", encoding="utf-8") as handle:
                snapshots, report = ingest_snapshot_records(handle, lattice_shape)
        except OSError as e:
            raise ArtifactIOError(f"cannot read {input_path}: {e}") from e
        if self.strict and report.rejected:
            raise ValidationError(
                f"{report.rejected} snapshot records rejected (first lines {report.rejected_lines[:10]})"
            )
        outputs = {"snapshots": self._path("snapshots.jsonl"), "histogram": self._path("snapshot_counts.csv")}
        write_snapshots(snapshots, outputs["snapshots"])
        counts = snapshots.counts()
        write_csv(outputs["histogram"], counts)
        for name, path in outputs.items():
            manifest.add_output(name, path)
        histogram = counts["count"].value_counts().sort_index()
        logger.info(f"snapshots per control point: {histogram.to_dict()}")
        manifest.write(
            self.out_dir,
            {"records": report.lines, "accepted": report.accepted, "rejected": report.rejected},
        )
        return outputs

    def _build_model(self, dataset: GridDataset, config: TrainFileConfig) -> SpinVAE:
        model_config = validate_config(
            ModelConfig,
            {**config.model, "n_sites": dataset.n_sites, "variant": config.variant},
        )
        return SpinVAE(model_config, seed=config.seed)

    @staticmethod
    def resolve_train_config(config: TrainFileConfig, preset: Optional[str]) -> TrainFileConfig:
        """Applies a named weight preset on top of a file config."""
        if preset is None:
            return config
        if preset not in WEIGHT_PRESETS:
            raise ValidationError(f"unknown weight preset {preset!r}; valid: {sorted(WEIGHT_PRESETS)}")
        weights = WEIGHT_PRESETS[preset]
        return config.model_copy(
            update={
                "weights": weights.weights(),
                "gamma_min": weights.gamma_min,
                "gamma_max": weights.gamma_max,
            }
        )

    def _fit(self, dataset: GridDataset, config: TrainFileConfig, manifest: RunManifest) -> SpinVAE:
        config = config.model_copy(update={"seed": self._seed(config.seed)})
        model = self._build_model(dataset, config)
        metrics = TrainingMetrics()
        train_config = TrainConfig(**config.model_dump(exclude={"model"}))
        model, history = train(model, dataset, train_config, out_dir=self.out_dir, metrics=metrics)
        manifest.mark("train")
        loss_path, sigma_path = history.write(self.out_dir)
        metrics_path = self._path("metrics.prom")
        metrics.write(metrics_path)
        checkpoint = self._path("checkpoint")
        model.save(checkpoint, metadata={"manifest": manifest.file_name})
        manifest.add_output("checkpoint", checkpoint + ".json")
        manifest.add_output("history", loss_path)
        manifest.add_output("sigma_history", sigma_path)
        manifest.add_output("metrics", metrics_path)
        manifest.seeds["seed"] = config.seed
        return model

    def train(self, dataset_path: str, config: TrainFileConfig, preset: Optional[str] = None) -> Dict[str, Any]:
        config = self.resolve_train_config(config, preset)
        manifest = RunManifest(
            command="train",
            config=config.model_dump(mode="json"),
            inputs={"dataset": os.path.abspath(dataset_path)},
        )
        dataset = self.load_grid(dataset_path)
        model = self._fit(dataset, config, manifest)
        active = active_latent_neurons(model, dataset)
        manifest.write(self.out_dir, {"active_dimensions": active, "preset": preset})
        return {"checkpoint": self._path("checkpoint"), "active": active}

    def holdout(
        self,
        dataset_path: str,
        holdout: HoldoutSpec,
        config: TrainFileConfig,
        preset: Optional[str] = None,
        observable: str = "zz2",
    ) -> Dict[str, Any]:
        """
        Trains with one band of an axis removed and compares reconstruction errors inside and outside it.

        Returns:
            Dict[str, Any]: Output paths, both mean errors and their ratio (held-out over training region).
        """
        config = self.resolve_train_config(config, preset)
        manifest = RunManifest(
            command="holdout",
            config={**config.model_dump(mode="json"), "holdout": holdout.model_dump(), "observable": observable},
            inputs={"dataset": os.path.abspath(dataset_path)},
        )
        dataset = self.load_grid(dataset_path)
        flags = holdout.excluded(dataset)
        training_set = dataset.restrict(holdout.axis, ~flags)
        logger.info(
            f"holdout on {holdout.axis} in ({holdout.lo:g}, {holdout.hi:g}): "
            f"{int(flags.sum())} values excluded, {len(training_set.records)} grid points kept"
        )
        model = self._fit(training_set, config, manifest)

        reference = training_data_map(dataset, observable, threads=self.threads)
        generated = reconstruction_map(model, dataset, observable, seed=config.seed, threads=self.threads)
        manifest.mark("evaluate")
        held_out = np.broadcast_to(
            flags[:, None] if holdout.axis == "axis1" else flags[None, :], dataset.shape
        )
        error = np.abs(generated.values - reference.values)
        maps = {
            "heldout": PhaseMap(dataset.axis1, dataset.axis2, np.where(held_out, error, np.nan),
                                f"holdout_error_{observable}", dataset.axis1_name, dataset.axis2_name),
            "training": PhaseMap(dataset.axis1, dataset.axis2, np.where(held_out, np.nan, error),
                                 f"training_error_{observable}", dataset.axis1_name, dataset.axis2_name),
        }
        heldout_error = map_mean_absolute_error(generated, reference, held_out)
        training_error = map_mean_absolute_error(generated, reference, ~held_out)
        ratio = heldout_error / training_error if training_error > 0 else float("inf")

        outputs: Dict[str, Any] = {}
        for name, phase_map in maps.items():
            path = self._path(f"holdout_error_{name}.csv")
            phase_map.write_csv(path)
            manifest.add_output(f"error_{name}", path)
            outputs[name] = path
        summary = {"heldout_error": heldout_error, "training_error": training_error, "ratio": ratio}
        write_json(self._path("holdout_summary.json"), summary)
        manifest.write(self.out_dir, summary)
        logger.info(f"holdout errors: held-out {heldout_error:.4f}, training {training_error:.4f}, ratio {ratio:.3f}")
        outputs.update(summary)
        return outputs

    def analyze(self, checkpoint: Optional[str], dataset_path: str, config: AnalyzeConfig) -> List[str]:
        """
        Runs one analysis and writes its CSVs.

        Raises:
            ValidationError: If the analysis needs a checkpoint and none was given.
        """
        manifest = RunManifest(
            command=f"analyze-{config.analysis}",
            config=config.model_dump(mode="json"),
            inputs={"dataset": os.path.abspath(dataset_path), "checkpoint": os.path.abspath(checkpoint or "")},
            seeds={"seed": self._seed(0)},
        )
        written: List[str] = []

        def emit(name: str, frame: pd.DataFrame) -> None:
            path = self._path(name)
            write_csv(path, frame)
            manifest.add_output(name, path)
            written.append(path)

        if config.analysis == "rydberg-orders":
            maps = rydberg_phase_maps(read_snapshots(dataset_path), config.presets)
            for name, phase_map in maps.items():
                emit(f"rydberg_{name}.csv", phase_map.to_frame())
            manifest.write(self.out_dir)
            return written

        dataset = self.load_grid(dataset_path)
        if config.analysis == "data-map":
            phase_map = training_data_map(dataset, config.observable, config.k, config.site, self.threads)
            emit(f"data_{config.observable}.csv", phase_map.to_frame())
            manifest.write(self.out_dir)
            return written

        if not checkpoint:
            raise ValidationError(f"analysis {config.analysis} needs --checkpoint")
        model = SpinVAE.load(checkpoint)
        if model.n_sites != dataset.n_sites:
            raise ValidationError(f"checkpoint has {model.n_sites} sites, dataset {dataset.n_sites}")
        seed = self._seed(0)
        summary: Dict[str, Any] = {}

        if config.analysis == "active":
            sigma = mean_sigma(model, dataset)
            frame = pd.DataFrame(
                {"dimension": np.arange(sigma.size), "mean_sigma": sigma, "active": sigma < config.threshold}
            )
            emit("active.csv", frame)
            summary["active_dimensions"] = [int(i) for i in np.flatnonzero(sigma < config.threshold)]
        elif config.analysis == "latent-map":
            dimensions = config.dimensions
            if dimensions is None:
                dimensions = active_latent_neurons(model, dataset, config.threshold)
                if not dimensions:
                    logger.warning("no active latent dimensions; no latent maps written")
            for label, phase_map in latent_phase_map(model, dataset, dimensions).items():
                emit(f"latent_{label}.csv", phase_map.to_frame())
        elif config.analysis == "reconstruction":
            generated = reconstruction_map(
                model, dataset, config.observable, seed, config.k, config.site, self.threads
            )
            emit(f"reconstruction_{config.observable}.csv", generated.to_frame())
            reference = training_data_map(dataset, config.observable, config.k, config.site, self.threads)
            summary["mean_absolute_error"] = map_mean_absolute_error(generated, reference)
        elif config.analysis == "sweep":
            values = np.linspace(config.sweep_from, config.sweep_to, config.sweep_steps)
            active = active_latent_neurons(model, dataset, config.threshold)
            frame = latent_sweep_generate(
                model,
                config.sweep_dim,
                values,
                config.sweep_count,
                seed,
                second_dimension=config.sweep_dim2,
                second_values=values if config.sweep_dim2 is not None else None,
                active_dimensions=active,
                periodic=dataset.periodic,
            )
            suffix = "" if config.sweep_dim2 is None else f"_{config.sweep_dim2}"
            emit(f"sweep_dim{config.sweep_dim}{suffix}.csv", frame)
        elif config.analysis == "entropy":
            table, slopes = variance_entropy_relation(model, dataset, config.max_per_point, seed)
            emit("entropy_table.csv", table)
            emit("entropy_slopes.csv", slopes)

        manifest.write(self.out_dir, summary)
        return written

    def sample(self, checkpoint: str, z: Sequence[float], count: int, seed: Optional[int] = None) -> str:
        """Draws `count` configurations at a fixed latent vector (dvae: its thresholded output)."""
        seed = self._seed(seed or 0)
        model = SpinVAE.load(checkpoint)
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (model.latent_dim,):
            raise ValidationError(f"latent vector needs {model.latent_dim} entries, got {z.size}")
        manifest = RunManifest(
            command="sample",
            config={"z": z.tolist(), "count": count},
            seeds={"seed": seed},
            inputs={"checkpoint": os.path.abspath(checkpoint)},
        )
        if model.config.is_autoregressive:
            batch = model.autoregressive_sample(z, count, seed)
        else:
            batch = np.where(model.dvae_decode(z) >= 0, 1, -1).astype(np.int8)
        dataset = GridDataset(
            n_sites=model.n_sites,
            boundary=Boundary.PERIODIC,
            axis1_name="sample",
            axis2_name="sample",
            axis1=[0.0],
            axis2=[0.0],
            records={(0.0, 0.0): batch},
            samples_per_point=len(batch),
            seed=seed,
            source=f"{model.config.variant.value}_samples",
            extra={"z": z.tolist(), "manifest": manifest.file_name},
        )
        path = self._path("samples.jsonl")
        write_dataset(dataset, path)
        manifest.add_output("samples", path)
        manifest.write(self.out_dir)
        return path

    def gradcheck(
        self,
        n_sites: int,
        batch_size: int,
        seed: int,
        tolerance: float = 1e-4,
        step: float = 1e-5,
        max_entries: Optional[int] = None,
        preset: str = "nnn",
    ) -> GradientCheckReport:
        """
        Central-difference check of the full cpvae objective on random data.

        Raises:
            GradientCheckError: If the maximum relative error exceeds `tolerance`.
        """
        seed = self._seed(seed)
        if batch_size < 2:
            raise ValidationError("gradient check needs a batch of at least 2")
        model = SpinVAE(validate_config(ModelConfig, {"n_sites": n_sites}), seed=seed)
        rng = np.random.default_rng(seed)
        x = rng.choice([-1.0, 1.0], size=(batch_size, n_sites))
        epsilon = rng.standard_normal((batch_size, model.latent_dim))
        weights = WEIGHT_PRESETS[preset]
        gamma = 0.5 * (weights.gamma_min + weights.gamma_max)
        arguments = (model, x, weights.weights(), gamma, batch_size, epsilon)
        report = finite_difference_check(
            objective_closure(*arguments),
            objective_closure(*arguments, backward=True),
            model.parameters(),
            step=step,
            max_entries_per_parameter=max_entries,
            seed=seed,
            tolerance=tolerance,
        )
        write_json(
            self._path("gradcheck.json"),
            {
                "n_sites": n_sites,
                "batch_size": batch_size,
                "seed": seed,
                "max_relative_error": report.max_relative_error,
                "worst_parameter": report.worst_parameter,
                "worst_index": [int(i) for i in report.worst_index],
                "entries_checked": report.entries_checked,
                "tolerance": tolerance,
            },
        )
        if report.max_relative_error > tolerance:
            raise GradientCheckError(report.max_relative_error, tolerance)
        return report
