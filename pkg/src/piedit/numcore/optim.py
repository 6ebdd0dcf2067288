"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DivergenceError(FloatingPointError):
    """A gradient or loss went non-finite."""

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter


@dataclass
class OptimizerState:
    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stability: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, state, learning_rate=None):
    """Apply one Adam update in place to every parameter in ``params``.

    ``params`` is a mapping name -> Parameter with populated ``.grad``.
    ``learning_rate`` overrides ``state.learning_rate`` for this step only
    (used by warmup schedules).
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in parameter {name!r}", parameter=name)

    state.step += 1
    lr = state.learning_rate if learning_rate is None else learning_rate
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, p in params.items():
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        g = p.grad
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps_stability)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)
    return params, state
