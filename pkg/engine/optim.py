"""
AdamW / Adam updates and the reduce-on-plateau learning-rate schedule.
Both are pure: they return new arrays and a new state.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from utils.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class OptState:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")


def _moments(params, grads, state):
    beta1, beta2 = state.betas
    step = state.step + 1
    first = {}
    second = {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"Gradient for {name} has shape {grad.shape}, parameter has {value.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        first[name] = beta1 * m + (1.0 - beta1) * grad
        second[name] = beta2 * v + (1.0 - beta2) * grad * grad
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    return step, first, second, correction1, correction2


def adamw_step(params, grads, state):
    """One AdamW update with weight decay decoupled from the adaptive step"""
    step, first, second, correction1, correction2 = _moments(params, grads, state)
    updated = {}
    for name, value in params.items():
        decayed = value - state.lr * state.weight_decay * value
        m_hat = first[name] / correction1
        v_hat = second[name] / correction2
        updated[name] = decayed - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, replace(state, step=step, first_moment=first, second_moment=second)


def adam_step(params, grads, state):
    """One Adam update; weight decay is folded into the gradient (L2)"""
    coupled = {name: grads[name] + state.weight_decay * value for name, value in params.items()}
    step, first, second, correction1, correction2 = _moments(params, coupled, state)
    updated = {}
    for name, value in params.items():
        m_hat = first[name] / correction1
        v_hat = second[name] / correction2
        updated[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, replace(state, step=step, first_moment=first, second_moment=second)


@dataclass(frozen=True)
class PlateauState:
    patience: int = 5
    factor: float = 0.5
    min_lr: float = 1e-6
    threshold: float = 1e-8
    best_metric: float = math.inf
    epochs_since_improve: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"plateau patience must be positive, got {self.patience}")
        if not 0.0 < self.factor < 1.0:
            raise ConfigError(f"plateau factor must be in (0, 1), got {self.factor}")
        if self.min_lr < 0:
            raise ConfigError(f"min_lr must be nonnegative, got {self.min_lr}")


def plateau_step(state, val_metric, current_lr):
    """
    Loss-mode plateau rule.
    Returns (new_lr, new_state); lr never increases and never drops below min_lr.
    """
    if val_metric < state.best_metric - state.threshold:
        return current_lr, replace(state, best_metric=val_metric, epochs_since_improve=0)
    waited = state.epochs_since_improve + 1
    if waited > state.patience:
        new_lr = max(current_lr * state.factor, state.min_lr)
        return min(new_lr, current_lr), replace(state, epochs_since_improve=0)
    return current_lr, replace(state, epochs_since_improve=waited)
