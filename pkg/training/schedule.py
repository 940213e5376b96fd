import sys
import os

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.exceptions import ValidationError


def gamma_schedule(step: int, total_steps: int, gamma_min: float, gamma_max: float) -> float:
    """Linear ramp from gamma_min at step 0 to gamma_max at step total_steps."""
    if total_steps <= 0:
        raise ValidationError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValidationError(f"step {step} outside [0, {total_steps}]")
    return gamma_min + (gamma_max - gamma_min) * step / total_steps


def run_gamma(step: int, steps_in_run: int, gamma_min: float, gamma_max: float) -> float:
    """gamma for the given step of a run; the last step of the run reaches gamma_max."""
    return gamma_schedule(step, max(steps_in_run - 1, 1), gamma_min, gamma_max)
