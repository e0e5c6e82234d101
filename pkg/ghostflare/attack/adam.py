"""Adam with an optional box projection after every step."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ghostflare.exceptions import NonFiniteObjective

logger = logging.getLogger(__name__)

# objective(x, step) -> (value, gradient); `step` lets the caller key random draws
Objective = Callable[[np.ndarray, int], Tuple[float, np.ndarray]]


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.01, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    max_iters: int = Field(1500, ge=1)
    # None disables the projection
    bounds: Optional[Tuple[float, float]] = (0.0, 1.0)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.bounds is not None and not self.bounds[0] <= self.bounds[1]:
            raise ValueError("bounds must satisfy lower <= upper")
        return self


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    best_step: int
    trace: List[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)


def optimize(objective: Objective, x0, config: AdamConfig = AdamConfig()) -> OptimizeResult:
    """
    Minimise `objective` from `x0`.

    The objective is evaluated once per step at the current iterate; the
    returned point is the best iterate seen, not the last one. Raises
    NonFiniteObjective, carrying the trace so far, if a value or gradient stops
    being finite.
    """
    x = np.array(x0, dtype=np.float64)
    if config.bounds is not None:
        x = np.clip(x, *config.bounds)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace: List[float] = []
    best_x, best_value, best_step = x.copy(), np.inf, 0

    for step in range(config.max_iters):
        value, grad = objective(x, step)
        value = float(value)
        grad = np.asarray(grad, dtype=np.float64)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NonFiniteObjective(trace)
        trace.append(value)
        if value < best_value:
            best_x, best_value, best_step = x.copy(), value, step

        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad**2
        m_hat = m / (1.0 - config.beta1 ** (step + 1))
        v_hat = v / (1.0 - config.beta2 ** (step + 1))
        x = x - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        if config.bounds is not None:
            x = np.clip(x, *config.bounds)

        if step % 100 == 0:
            logger.debug("[optimize] step %d value %.6g", step, value)

    return OptimizeResult(best_x, best_value, best_step, trace)
