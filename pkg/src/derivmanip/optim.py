"""SGD, heavy-ball momentum, Nesterov momentum and Adam, plus lr schedules.

Weight decay is L2 coupled into the gradient (g + wd * theta) for every
optimizer. Updates are applied in place on the parameter arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError

OPTIMIZER_KINDS = ("SGD", "Momentum", "Nesterov", "Adam")
SCHEDULE_KINDS = ("Constant", "StepDecay", "Inv")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "SGD"
    lr: float = 0.01
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    # Adam's denominator stabilizer (the "delta" of Adam's hyperparameters)
    adam_delta: float = 1e-8
    weight_decay: float = 0.0

    def validate(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.kind in ("Momentum", "Nesterov") and not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.kind == "Adam":
            for name in ("adam_beta1", "adam_beta2"):
                if not 0.0 <= getattr(self, name) < 1.0:
                    raise ConfigError(f"{name} must be in [0, 1)")
            if not self.adam_delta > 0:
                raise ConfigError("adam_delta must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        return self


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "Constant"
    milestones: Tuple[int, ...] = ()
    factor: float = 0.1
    gamma: float = 1e-4
    power: float = 0.75

    def validate(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "StepDecay":
            ms = list(self.milestones)
            if any(b <= a for a, b in zip(ms, ms[1:])):
                raise ConfigError(f"milestones must be strictly increasing: {ms}")
            if not 0.0 < self.factor < 1.0:
                raise ConfigError(f"decay factor must be in (0, 1), got {self.factor}")
        if self.kind == "Inv" and not (self.gamma > 0 and self.power > 0):
            raise ConfigError("inv schedule needs gamma > 0 and power > 0")
        return self


def lr_at(schedule: LrSchedule, base_lr: float, iteration: int) -> float:
    if schedule.kind == "Constant":
        return base_lr
    if schedule.kind == "StepDecay":
        passed = sum(1 for m in schedule.milestones if m <= iteration)
        return base_lr * schedule.factor**passed
    return base_lr * (1.0 + schedule.gamma * iteration) ** (-schedule.power)


@dataclass
class OptimizerState:
    velocity: List[np.ndarray] = field(default_factory=list)
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)
    steps: int = 0


def make_optimizer(spec: OptimizerSpec, param_shapes: Sequence[tuple]) -> OptimizerState:
    spec.validate()
    zeros = lambda: [np.zeros(s) for s in param_shapes]  # noqa: E731
    state = OptimizerState()
    if spec.kind in ("Momentum", "Nesterov"):
        state.velocity = zeros()
    elif spec.kind == "Adam":
        state.first_moment = zeros()
        state.second_moment = zeros()
    return state


def step(spec: OptimizerSpec, state: OptimizerState, params, grads, lr=None):
    """One update of every parameter array in place; returns ``params``.

    ``lr`` overrides ``spec.lr`` (used with a schedule).
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter {np.shape(p)} vs gradient {np.shape(g)}")
    lr = spec.lr if lr is None else lr
    wd = spec.weight_decay
    state.steps += 1
    t = state.steps
    for i, (p, g) in enumerate(zip(params, grads)):
        g = g + wd * p if wd else g
        if spec.kind == "SGD":
            p -= lr * g
        elif spec.kind == "Momentum":
            v = state.velocity[i]
            v *= spec.momentum
            v += g
            p -= lr * v
        elif spec.kind == "Nesterov":
            v = state.velocity[i]
            v *= spec.momentum
            v += g
            p -= lr * (g + spec.momentum * v)
        else:
            b1, b2 = spec.adam_beta1, spec.adam_beta2
            m, u = state.first_moment[i], state.second_moment[i]
            m *= b1
            m += (1.0 - b1) * g
            u *= b2
            u += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**t)
            u_hat = u / (1.0 - b2**t)
            p -= lr * m_hat / (np.sqrt(u_hat) + spec.adam_delta)
    return params
