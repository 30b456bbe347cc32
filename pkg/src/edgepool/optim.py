"""SGD with momentum, Adam, and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Parameter, ShapeError

__all__ = [
    "sgd_momentum_step",
    "adam_step",
    "AdamState",
    "SGD",
    "Adam",
    "reduce_on_plateau",
    "ReduceLROnPlateau",
    "make_optimizer",
]


def _check(params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ShapeError(f"got {len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"parameter {i}: shape {p.shape} but gradient shape {g.shape}")


def sgd_momentum_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float,
                      momentum: float = 0.9, weight_decay: float = 0.0,
                      velocity: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Update ``params`` in place and return the new velocity buffers.

    ``g <- g + weight_decay * w;  v <- momentum * v + g;  w <- w - lr * v``
    """
    _check(params, grads)
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    _check(params, velocity)
    for p, g, v in zip(params, grads, velocity):
        if weight_decay:
            g = g + weight_decay * p
        v *= momentum
        v += g
        p -= lr * v
    return velocity


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0,
              state: AdamState | None = None) -> AdamState:
    """Bias-corrected Adam update, in place.  Returns the moment state."""
    _check(params, grads)
    if state is None:
        state = AdamState.zeros(params)
    state.t += 1
    c1 = 1 - beta1 ** state.t
    c2 = 1 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class _Optimizer:
    def __init__(self, params: Sequence[Parameter], lr: float, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def _arrays(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        return [p.data for p in self.params], grads


class SGD(_Optimizer):
    def __init__(self, params, lr: float = 0.01, momentum: float = 0.9, weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.velocity = None

    def step(self) -> None:
        data, grads = self._arrays()
        self.velocity = sgd_momentum_step(data, grads, self.lr, self.momentum, self.weight_decay, self.velocity)


class Adam(_Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        self.betas = tuple(betas)
        self.eps = eps
        self.state = None

    def step(self) -> None:
        data, grads = self._arrays()
        self.state = adam_step(data, grads, self.lr, *self.betas, self.eps, self.weight_decay, self.state)


def make_optimizer(name: str, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
    if name == "sgd_momentum":
        return SGD(params, lr, momentum, weight_decay)
    if name == "adam":
        return Adam(params, lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}; expected 'sgd_momentum' or 'adam'")


@dataclass
class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    An epoch improves when the metric beats the best so far by more than
    ``min_delta``.  The bad-epoch counter restarts after every reduction.
    """

    factor: float = 0.1
    patience: int = 5
    min_delta: float = 1e-4
    mode: str = "min"
    best: float | None = None
    bad_epochs: int = 0
    num_reductions: int = 0

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError(f"plateau factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ValueError(f"plateau patience must be >= 1, got {self.patience}")
        if self.mode not in ("min", "max"):
            raise ValueError(f"plateau mode must be 'min' or 'max', got {self.mode!r}")

    def _improved(self, value: float) -> bool:
        if self.best is None:
            return True
        if self.mode == "min":
            return value < self.best - self.min_delta
        return value > self.best + self.min_delta

    def step(self, value: float, lr: float) -> float:
        if self._improved(value):
            self.best = value
            self.bad_epochs = 0
            return lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            self.num_reductions += 1
            return lr * self.factor
        return lr


def reduce_on_plateau(history: Sequence[float], lr: float, factor: float = 0.1, patience: int = 5,
                      min_delta: float = 1e-4, mode: str = "min") -> float:
    """Learning rate after replaying ``history`` through the plateau rule."""
    sched = ReduceLROnPlateau(factor, patience, min_delta, mode)
    for value in history:
        lr = sched.step(float(value), lr)
    return lr
