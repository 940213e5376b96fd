import sys
import os
import time
import argparse
from typing import Any, Callable, Dict, List, NoReturn, Optional

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.configs import (
    ANALYSES,
    AnalyzeConfig,
    GenerateConfig,
    HoldoutSpec,
    TrainFileConfig,
    load_json_config,
    validate_config,
)
from app.pipeline import Pipeline
from objective.weights import WEIGHT_PRESETS
from utils.exceptions import EXIT_IO, EXIT_OK, CpvaeError, ValidationError
from utils.logger import logging, set_console_level

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR: str = os.environ.get("CPVAE_OUT_DIR", "artifacts")
DEFAULT_THREADS: int = int(os.environ.get("CPVAE_THREADS", "1"))


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as validation failures instead of exiting with status 2."""

    def error(self, message: str) -> NoReturn:
        raise ValidationError(f"{self.prog}: {message}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value: Any) -> Any:
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--seed", type=int, default=default(None), help="root seed overriding config seeds")
    parser.add_argument("--config", default=default(""), help="JSON config file for the command")
    parser.add_argument("--out-dir", default=default(DEFAULT_OUT_DIR), help="artifact directory")
    parser.add_argument("--strict", action="store_true", default=default(False), help="fail on rejected records")
    parser.add_argument("--threads", type=int, default=default(DEFAULT_THREADS), help="worker threads")
    parser.add_argument("--log-level", default=default(None), help="console log level")


def _training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset or Rydberg snapshot file")
    parser.add_argument("--variant", choices=["cpvae", "dvae"], default=None)
    parser.add_argument("--weights", choices=sorted(WEIGHT_PRESETS), default=None, help="named weight preset")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None, help="learning rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpvae", description="Correlation-preserving VAEs for spin-chain phase diagrams.")
    _global_flags(parser, suppress=False)
    shared = _Parser(add_help=False)
    _global_flags(shared, suppress=True)
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("generate", parents=[shared], help="exact-state snapshot grid from a JSON config")

    ingest = commands.add_parser("ingest", parents=[shared], help="validate Rydberg snapshot records")
    ingest.add_argument("--input", required=True, help="newline-delimited JSON snapshot records")
    ingest.add_argument("--lattice", type=int, nargs=2, required=True, metavar=("L1", "L2"))

    train = commands.add_parser("train", parents=[shared], help="train a cpvae or dvae model")
    _training_flags(train)

    holdout = commands.add_parser("holdout", parents=[shared], help="train without a band of one axis")
    _training_flags(holdout)
    holdout.add_argument("--axis", choices=["axis1", "axis2"], required=True)
    holdout.add_argument("--lo", type=float, required=True)
    holdout.add_argument("--hi", type=float, required=True)
    holdout.add_argument("--observable", default="zz2")

    analyze = commands.add_parser("analyze", parents=[shared], help="export phase maps and sweep tables")
    analyze.add_argument("--analysis", required=True, help=f"one of: {', '.join(ANALYSES)}")
    analyze.add_argument("--checkpoint", default=None, help="checkpoint prefix or .json manifest")
    analyze.add_argument("--dataset", required=True)
    analyze.add_argument("--observable", default=None)
    analyze.add_argument("--k", type=float, default=None, help="structure factor wavenumber")
    analyze.add_argument("--site", type=int, default=None, help="structure factor reference site")
    analyze.add_argument("--threshold", type=float, default=None, help="active-neuron sigma threshold")
    analyze.add_argument("--dims", type=int, nargs="+", default=None, help="latent dimensions to map")
    analyze.add_argument("--dim", type=int, default=None, help="swept latent dimension")
    analyze.add_argument("--dim2", type=int, default=None, help="second swept latent dimension")
    analyze.add_argument("--from", dest="sweep_from", type=float, default=None)
    analyze.add_argument("--to", dest="sweep_to", type=float, default=None)
    analyze.add_argument("--steps", type=int, default=None)
    analyze.add_argument("--count", type=int, default=None, help="configurations per sweep value")
    analyze.add_argument("--max-per-point", type=int, default=None)

    sample = commands.add_parser("sample", parents=[shared], help="draw configurations at a latent vector")
    sample.add_argument("--checkpoint", required=True)
    sample.add_argument("--z", type=float, nargs="+", required=True)
    sample.add_argument("--count", type=int, default=1000)

    gradcheck = commands.add_parser("gradcheck", parents=[shared], help="finite-difference gradient check")
    gradcheck.add_argument("--n-sites", type=int, default=8)
    gradcheck.add_argument("--batch", type=int, default=16)
    gradcheck.add_argument("--tol", type=float, default=1e-4)
    gradcheck.add_argument("--step", type=float, default=1e-5)
    gradcheck.add_argument("--max-entries", type=int, default=None, help="entries checked per parameter")
    return parser


def _train_config(args: argparse.Namespace) -> TrainFileConfig:
    overrides = {
        "variant": args.variant,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
    }
    return load_json_config(args.config, TrainFileConfig, overrides)


def _checkpoint_prefix(path: str) -> str:
    return path[: -len(".json")] if path.endswith(".json") else path


def cmd_generate(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    if not args.config:
        raise ValidationError("generate needs --config")
    return pipeline.generate(load_json_config(args.config, GenerateConfig))


def cmd_ingest_snapshots(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    return pipeline.ingest(args.input, tuple(args.lattice))


def cmd_train(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    return pipeline.train(args.dataset, _train_config(args), preset=args.weights)


def cmd_holdout(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    spec = validate_config(HoldoutSpec, {"axis": args.axis, "lo": args.lo, "hi": args.hi})
    return pipeline.holdout(
        args.dataset, spec, _train_config(args), preset=args.weights, observable=args.observable
    )


def cmd_analyze(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    overrides = {
        "analysis": args.analysis,
        "observable": args.observable,
        "k": args.k,
        "site": args.site,
        "threshold": args.threshold,
        "dimensions": args.dims,
        "sweep_dim": args.dim,
        "sweep_dim2": args.dim2,
        "sweep_from": args.sweep_from,
        "sweep_to": args.sweep_to,
        "sweep_steps": args.steps,
        "sweep_count": args.count,
        "max_per_point": args.max_per_point,
    }
    config = load_json_config(args.config, AnalyzeConfig, overrides)
    checkpoint = _checkpoint_prefix(args.checkpoint) if args.checkpoint else None
    return pipeline.analyze(checkpoint, args.dataset, config)


def cmd_sample(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    if args.count < 1:
        raise ValidationError("--count must be positive")
    return pipeline.sample(_checkpoint_prefix(args.checkpoint), args.z, args.count)


def cmd_gradcheck(pipeline: Pipeline, args: argparse.Namespace) -> Any:
    report = pipeline.gradcheck(
        args.n_sites, args.batch, seed=0, tolerance=args.tol, step=args.step, max_entries=args.max_entries
    )
    logger.info(
        f"gradient check passed: max relative error {report.max_relative_error:.3e} "
        f"({report.entries_checked} entries, worst {report.worst_parameter})"
    )
    return report


COMMANDS: Dict[str, Callable[[Pipeline, argparse.Namespace], Any]] = {
    "generate": cmd_generate,
    "ingest": cmd_ingest_snapshots,
    "train": cmd_train,
    "holdout": cmd_holdout,
    "analyze": cmd_analyze,
    "sample": cmd_sample,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parses `argv`, runs one command and returns its exit status.

    Returns:
        int: 0 on success, 1 on rejected input, 2 on a numerical failure, 3 on an I/O failure.
    """
    command = "cpvae"
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if args.log_level:
            set_console_level(args.log_level)
        pipeline = Pipeline(args.out_dir, threads=args.threads, strict=args.strict, seed=args.seed)
        logger.info(f"{command} started (out_dir={args.out_dir}, seed={args.seed}, threads={args.threads})")
        started = time.perf_counter()
        COMMANDS[command](pipeline, args)
        logger.info(f"{command} finished in {time.perf_counter() - started:.2f}s")
        return EXIT_OK
    except CpvaeError as e:
        logger.error(f"{command} failed: {e}", exc_info=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"{command} failed: {e}", exc_info=True)
        return EXIT_IO
