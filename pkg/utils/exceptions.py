from typing import Optional, Tuple

EXIT_OK: int = 0
EXIT_VALIDATION: int = 1
EXIT_NUMERICAL: int = 2
EXIT_IO: int = 3


class CpvaeError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_code: int = EXIT_VALIDATION


class ValidationError(CpvaeError, ValueError):
    """Rejected input: a precondition, shape, range or format check failed."""

    exit_code = EXIT_VALIDATION


class UnsupportedOperationError(ValidationError):
    """The requested operation does not exist for this model variant."""


class ConvergenceError(CpvaeError):
    """
    Lanczos did not reach the requested residual.

    Attributes:
        residual (float): Last true residual ||H psi - E psi||.
        iterations (int): Matrix-vector products spent.
    """

    exit_code = EXIT_NUMERICAL

    def __init__(self, residual: float, iterations: int) -> None:
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Lanczos did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class GridPointError(CpvaeError):
    """A grid point failed during dataset generation; carries its coordinates."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, coordinates: Tuple[float, float], cause: Exception) -> None:
        self.coordinates = coordinates
        self.cause = cause
        super().__init__(
            f"grid point (axis1={coordinates[0]:g}, axis2={coordinates[1]:g}) failed: {cause}"
        )


class NumericalDivergenceError(CpvaeError):
    """Training produced a non-finite loss or optimizer state."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, step: int, checkpoint_path: Optional[str] = None) -> None:
        self.step = step
        self.checkpoint_path = checkpoint_path
        where = f"; last checkpoint kept at {checkpoint_path}" if checkpoint_path else ""
        super().__init__(f"non-finite loss at step {step}{where}")


class ArtifactIOError(CpvaeError):
    """An artifact could not be read or is malformed."""

    exit_code = EXIT_IO

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class GradientCheckError(CpvaeError):
    """Reverse-mode gradients disagree with central differences beyond tolerance."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, max_relative_error: float, tolerance: float) -> None:
        self.max_relative_error = max_relative_error
        self.tolerance = tolerance
        super().__init__(
            f"gradient check failed: max relative error {max_relative_error:.3e} > {tolerance:.1e}"
        )
