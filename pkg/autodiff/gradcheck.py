import sys
import os
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.layers import Parameter
from autodiff.network import zero_grad
from utils.exceptions import ValidationError
from utils.logger import logging

logger = logging.getLogger(__name__)


@dataclass
class GradientCheckReport:
    max_relative_error: float
    worst_parameter: str
    worst_index: tuple
    entries_checked: int


def finite_difference_check(
    loss: Callable[[], float],
    loss_and_backward: Callable[[], float],
    parameters: List[Parameter],
    step: float = 1e-5,
    floor: float = 1e-4,
    max_entries_per_parameter: Optional[int] = None,
    seed: int = 0,
    tolerance: float = 1e-4,
    refinements: int = 2,
) -> GradientCheckReport:
    """
    Compares reverse-mode gradients of a scalar loss against central differences.

    The relative error of one entry is |g - g_fd| / max(|g|, |g_fd|, floor);
    the floor keeps entries that are zero in both (dead units) at error 0.
    An entry whose error exceeds `tolerance` is re-measured with the step cut
    tenfold, up to `refinements` times, keeping the smallest error; a relu or
    selu kink inside the wider interval is the usual cause of such a miss.

    Args:
        loss (Callable[[], float]): Forward-only evaluation of the scalar loss.
        loss_and_backward (Callable[[], float]): Evaluation that also accumulates `.grad`.
        parameters (List[Parameter]): Parameters to perturb.
        step (float): Central-difference step.
        floor (float): Denominator floor of the relative error.
        max_entries_per_parameter (Optional[int]): Random subset size per tensor; all entries when None.
        seed (int): Seed of the subset selection.
        tolerance (float): Error above which an entry is re-measured.
        refinements (int): Maximum number of step reductions per entry.

    Returns:
        GradientCheckReport: Maximum relative error and where it occurred.

    Raises:
        ValidationError: If step is not positive.
    """
    if step <= 0:
        raise ValidationError("step must be positive")

    zero_grad(parameters)
    loss_and_backward()
    analytic = {p.name: p.grad.copy() for p in parameters}

    rng = np.random.default_rng(seed)
    worst = GradientCheckReport(0.0, "", (), 0)
    for parameter in parameters:
        flat = parameter.value.reshape(-1)
        positions = np.arange(flat.size)
        if max_entries_per_parameter is not None and flat.size > max_entries_per_parameter:
            positions = rng.choice(flat.size, size=max_entries_per_parameter, replace=False)
        grad = analytic[parameter.name].reshape(-1)
        for position in positions:
            h = step
            error = np.inf
            for _ in range(refinements + 1):
                original = flat[position]
                flat[position] = original + h
                upper = loss()
                flat[position] = original - h
                lower = loss()
                flat[position] = original
                numeric = (upper - lower) / (2.0 * h)
                error = min(error, abs(grad[position] - numeric) / max(abs(grad[position]), abs(numeric), floor))
                if error <= tolerance:
                    break
                h /= 10.0
            worst.entries_checked += 1
            if error > worst.max_relative_error:
                worst.max_relative_error = float(error)
                worst.worst_parameter = parameter.name
                worst.worst_index = np.unravel_index(position, parameter.shape)

    logger.info(
        f"gradient check: {worst.entries_checked} entries, max relative error "
        f"{worst.max_relative_error:.2e} at {worst.worst_parameter}{list(worst.worst_index)}"
    )
    return worst
