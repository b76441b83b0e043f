"""Parameter initialization and the Adam optimizer with exponential decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid, ShapeMismatch
from .tensor import Parameter

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LearningSchedule:
    initial_rate: float = 1e-4
    decay_step: int = 100_000
    decay_rate: float = 0.96

    def __post_init__(self):
        if self.initial_rate <= 0:
            raise ConfigInvalid("initial learning rate must be positive")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigInvalid("decay rate must be in (0, 1]")
        if self.decay_step <= 0:
            raise ConfigInvalid("decay step must be positive")

    def rate(self, iteration: int) -> float:
        """Continuous exponential decay (no staircase)."""
        return self.initial_rate * self.decay_rate ** (iteration / self.decay_step)


def _fans(shape) -> tuple[int, int]:
    if len(shape) == 4:  # conv (out, in, kh, kw)
        rf = shape[2] * shape[3]
        return shape[1] * rf, shape[0] * rf
    if len(shape) == 2:
        return shape[1], shape[0]
    if len(shape) == 1:
        return shape[0], shape[0]
    raise ShapeMismatch(f"cannot derive fan-in/out for shape {shape}")


def xavier_init(shape, rng: np.random.Generator, name: str = "",
                dtype=np.float64) -> Parameter:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = _fans(tuple(shape))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=shape).astype(dtype), name=name)


def zeros_param(shape, name: str = "", dtype=np.float64) -> Parameter:
    return Parameter(np.zeros(shape, dtype=dtype), name=name)


def ones_param(shape, name: str = "", dtype=np.float64) -> Parameter:
    return Parameter(np.ones(shape, dtype=dtype), name=name)


def adam_step(params, schedule: LearningSchedule, iteration: int) -> None:
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8) at the scheduled
    rate for the given global iteration (1-based).  Parameters without an
    accumulated gradient are skipped."""
    if iteration < 1:
        raise ValueError("iteration is 1-based")
    lr = schedule.rate(iteration)
    for p in params:
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise ShapeMismatch(
                f"gradient shape {p.grad.shape} vs parameter {p.data.shape}")
        p.ensure_state()
        p.step += 1
        g = p.grad
        p.m = ADAM_BETA1 * p.m + (1.0 - ADAM_BETA1) * g
        p.v = ADAM_BETA2 * p.v + (1.0 - ADAM_BETA2) * (g * g)
        mhat = p.m / (1.0 - ADAM_BETA1 ** p.step)
        vhat = p.v / (1.0 - ADAM_BETA2 ** p.step)
        p.data -= (lr * mhat / (np.sqrt(vhat) + ADAM_EPS)).astype(p.data.dtype)
